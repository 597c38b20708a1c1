//! Disjoint-set union with path compression and union by size.

#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<u32>,
    size: Vec<u32>,
    components: usize,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Unites the sets of `a` and `b`. Returns `false` if already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.components -= 1;
        true
    }

    /// Unites `small`'s set under `big`'s root regardless of sizes.
    /// Returns `false` if already joined.
    pub fn union_into(&mut self, big: u32, small: u32) -> bool {
        let (rb, rs) = (self.find(big), self.find(small));
        if rb == rs {
            return false;
        }
        self.parent[rs as usize] = rb;
        self.size[rb as usize] += self.size[rs as usize];
        self.components -= 1;
        true
    }

    pub fn component_size(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_sum_to_n() {
        let mut dsu = Dsu::new(10);
        dsu.union(0, 1);
        dsu.union(1, 2);
        dsu.union(5, 6);
        let mut total = 0u32;
        for x in 0..10 {
            if dsu.find(x) == x {
                total += dsu.component_size(x);
            }
        }
        assert_eq!(total, 10);
        assert_eq!(dsu.components(), 7);
    }

    #[test]
    fn find_is_idempotent() {
        let mut dsu = Dsu::new(4);
        dsu.union(0, 3);
        let r = dsu.find(3);
        assert_eq!(dsu.find(r), r);
    }
}
