//! Disjoint sets, plus a variant that tracks winding around a puncture.

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Union-find over the vertices of a punctured planar region where each
/// edge carries an integer winding increment (its signed crossing count
/// with a fixed ray out of the puncture). A component is flagged once it
/// contains a cycle with nonzero total increment, i.e. a cycle that winds
/// around the puncture.
#[derive(Debug, Clone)]
pub struct WindingUnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    // winding(x) - winding(parent(x))
    offset: Vec<i32>,
    winds: Vec<bool>,
}

impl WindingUnionFind {
    pub fn new(n: usize) -> Self {
        WindingUnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            offset: vec![0; n],
            winds: vec![false; n],
        }
    }

    /// Root and `winding(x) - winding(root)`.
    pub fn find(&mut self, x: usize) -> (usize, i32) {
        let p = self.parent[x] as usize;
        if p == x {
            return (x, 0);
        }
        let (root, off) = self.find(p);
        self.offset[x] += off;
        self.parent[x] = root as u32;
        (root, self.offset[x])
    }

    /// Add an edge `a -> b` along which the winding potential changes by `delta`.
    pub fn union(&mut self, a: usize, b: usize, delta: i32) {
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        if ra == rb {
            if oa + delta != ob {
                self.winds[ra] = true;
            }
            return;
        }
        // winding(b) = winding(a) + delta  =>  w(rb) - w(ra) = oa + delta - ob
        let d = oa + delta - ob;
        let (big, small, off) = if self.size[ra] >= self.size[rb] {
            (ra, rb, d)
        } else {
            (rb, ra, -d)
        };
        self.parent[small] = big as u32;
        self.offset[small] = off;
        self.size[big] += self.size[small];
        self.winds[big] |= self.winds[small];
    }

    pub fn component_winds(&mut self, x: usize) -> bool {
        let (r, _) = self.find(x);
        self.winds[r]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_union_find() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert!(uf.same(0, 1));
        assert!(!uf.same(1, 3));
        uf.union(1, 4);
        assert!(uf.same(0, 3));
    }

    #[test]
    fn winding_cycle_detected_only_when_net_crossing() {
        // square 0-1-2-3 around a puncture, edge 3->0 crosses the ray once
        let mut uf = WindingUnionFind::new(4);
        uf.union(0, 1, 0);
        uf.union(1, 2, 0);
        uf.union(2, 3, 0);
        assert!(!uf.component_winds(0));
        uf.union(3, 0, 1);
        assert!(uf.component_winds(2));

        // contractible cycle crossing the ray twice in opposite directions
        let mut uf = WindingUnionFind::new(4);
        uf.union(0, 1, 1);
        uf.union(1, 2, 0);
        uf.union(2, 3, -1);
        uf.union(3, 0, 0);
        assert!(!uf.component_winds(0));
    }
}
