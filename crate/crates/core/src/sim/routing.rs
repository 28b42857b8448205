use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::net::{LinkId, NetworkModel};

/// Links a vehicle on `link` may turn into, ascending by id.
pub fn successors(net: &NetworkModel, link: LinkId) -> Vec<LinkId> {
    let Some(j) = net.link(link).to else {
        return Vec::new();
    };
    let mut next: Vec<LinkId> = net
        .junction(j)
        .outgoing
        .iter()
        .copied()
        .filter(|&o| net.turn_ratios.has_movement(link, o))
        .collect();
    next.sort();
    next
}

/// Fewest-link path from `origin` to `dest`, both included. Successors are
/// explored in ascending id order, so ties go to the smaller link id.
pub fn route(net: &NetworkModel, origin: LinkId, dest: LinkId) -> Result<Vec<LinkId>> {
    let n = net.links.len();
    if origin.index() >= n || dest.index() >= n {
        return Err(Error::InvalidArgument(format!(
            "route endpoints {origin} -> {dest} out of range"
        )));
    }
    let mut parent: Vec<Option<LinkId>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([origin]);
    seen[origin.index()] = true;
    while let Some(l) = queue.pop_front() {
        if l == dest {
            let mut path = vec![dest];
            let mut cur = dest;
            while let Some(p) = parent[cur.index()] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Ok(path);
        }
        for s in successors(net, l) {
            if !seen[s.index()] {
                seen[s.index()] = true;
                parent[s.index()] = Some(l);
                queue.push_back(s);
            }
        }
    }
    Err(Error::Unreachable { from: origin, to: dest })
}

/// Memoized routes.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    routes: BTreeMap<(LinkId, LinkId), Vec<LinkId>>,
}

impl RouteTable {
    pub fn get(&mut self, net: &NetworkModel, origin: LinkId, dest: LinkId) -> Result<&[LinkId]> {
        Ok(match self.routes.entry((origin, dest)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(route(net, origin, dest)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_grid, TurnRatioTable};

    #[test]
    fn single_junction_path() {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap();
        let entry = LinkId(0); // row 0 enters from the west
        let next = successors(&net, entry);
        assert_eq!(next.len(), 2);
        for d in next {
            assert_eq!(route(&net, entry, d).unwrap(), vec![entry, d]);
        }
    }

    /// Every prefix of a shortest path must be at its BFS depth.
    #[test]
    fn corner_to_corner_is_shortest() {
        let net = build_grid(4, 4, 300.0, 0.5).unwrap();
        let entries = net.entry_links();
        let exits: Vec<LinkId> = net.links.iter().filter(|l| l.is_exit()).map(|l| l.id).collect();
        for &o in &entries {
            let depth = depths(&net, o);
            for &d in &exits {
                let r = route(&net, o, d).unwrap();
                assert_eq!(r.len() - 1, depth[d.index()].unwrap());
                for w in r.windows(2) {
                    assert!(successors(&net, w[0]).contains(&w[1]));
                }
            }
        }
    }

    fn depths(net: &NetworkModel, o: LinkId) -> Vec<Option<usize>> {
        // Bellman-Ford style relaxation, independent of the queue-based search.
        let mut d = vec![None; net.links.len()];
        d[o.index()] = Some(0);
        for _ in 0..net.links.len() {
            for l in &net.links {
                if let Some(dl) = d[l.id.index()] {
                    for s in successors(net, l.id) {
                        if d[s.index()].is_none_or(|x| x > dl + 1) {
                            d[s.index()] = Some(dl + 1);
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn cut_network_is_unreachable() {
        let mut net = build_grid(2, 2, 300.0, 0.5).unwrap();
        net.turn_ratios = TurnRatioTable::new();
        let err = route(&net, LinkId(0), LinkId(2)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }
}
