//! Reference implementation: asks the oracle about every pair, closes the
//! result transitively, intersects with rank and then splits by neighbor
//! classes until nothing changes. Quadratic in oracle calls; used to check
//! the real algorithms on small graphs.

use std::collections::BTreeMap;

use super::{Partition, SimilarityOracle};
use crate::ontology::UnionGraph;
use crate::oracle::DecisionKind;

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn brute_force_bisim(g: &UnionGraph, oracle: &dyn SimilarityOracle) -> Partition {
    let n = g.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            let (ia, ib) = (g.id(a as u32), g.id(b as u32));
            let (x, y) = if ia <= ib { (ia, ib) } else { (ib, ia) };
            if oracle.judge(x, y).kind == DecisionKind::Similar {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut label: Vec<usize> = Vec::with_capacity(n);
    {
        let mut ids: BTreeMap<(usize, u32), usize> = BTreeMap::new();
        for v in 0..n {
            let k = (find(&mut parent, v), g.rank(v as u32));
            let next = ids.len();
            label.push(*ids.entry(k).or_insert(next));
        }
    }
    loop {
        let mut ids: BTreeMap<(usize, Vec<usize>, Vec<usize>), usize> = BTreeMap::new();
        let mut next_label = Vec::with_capacity(n);
        for v in 0..n as u32 {
            let mut ps: Vec<usize> = g.parents(v).iter().map(|&p| label[p as usize]).collect();
            let mut cs: Vec<usize> = g.children(v).iter().map(|&c| label[c as usize]).collect();
            ps.sort_unstable();
            ps.dedup();
            cs.sort_unstable();
            cs.dedup();
            let k = (label[v as usize], ps, cs);
            let fresh = ids.len();
            next_label.push(*ids.entry(k).or_insert(fresh));
        }
        let before = label.iter().collect::<std::collections::BTreeSet<_>>().len();
        let after = ids.len();
        label = next_label;
        if before == after {
            break;
        }
    }
    let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for (v, l) in label.into_iter().enumerate() {
        groups.entry(l).or_default().push(v as u32);
    }
    Partition::from_groups(g, groups.into_values())
}
