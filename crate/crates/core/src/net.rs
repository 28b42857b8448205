//! Road network: one-way links, two-stage junctions, turning ratios,
//! directed circuits and demand zones, plus the alternating one-way grid
//! generator used by the experiments.
//!
//! Links are indexed by their id (`links[id]`), junctions likewise. Flows
//! are in vehicles per second, lengths in meters.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vehicle length plus jam gap used for the default storage capacity.
pub const JAM_SPACING_M: f64 = 7.0;
/// Default junction capacity as a multiple of the largest incoming saturation flow.
pub const DEFAULT_CAPACITY_FACTOR: f64 = 1.1;

pub const CENTRAL_ZONE: &str = "central";
pub const SIDE_ZONES: [&str; 4] = ["north", "east", "south", "west"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JunctionId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl JunctionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

impl fmt::Display for JunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "J{}", self.0)
    }
}

/// Travel direction of a link, map convention (north is +y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub fn unit(self) -> (f64, f64) {
        match self {
            Heading::North => (0.0, 1.0),
            Heading::East => (1.0, 0.0),
            Heading::South => (0.0, -1.0),
            Heading::West => (-1.0, 0.0),
        }
    }

    pub fn opposite(self) -> Heading {
        match self {
            Heading::North => Heading::South,
            Heading::East => Heading::West,
            Heading::South => Heading::North,
            Heading::West => Heading::East,
        }
    }

    /// Heading after a quarter turn to the right.
    pub fn clockwise(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    /// Rank of the side a link arrives from when ordering stages:
    /// west, then north, then east, then south.
    fn arrival_rank(self) -> u8 {
        match self.opposite() {
            Heading::West => 0,
            Heading::North => 1,
            Heading::East => 2,
            Heading::South => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub length: f64,
    pub saturation_flow: f64,
    pub storage_capacity: u32,
    /// `None` for network entry links.
    pub from: Option<JunctionId>,
    /// `None` for network exit links.
    pub to: Option<JunctionId>,
    pub heading: Heading,
}

impl Link {
    pub fn is_entry(&self) -> bool {
        self.from.is_none()
    }

    pub fn is_exit(&self) -> bool {
        self.to.is_none()
    }
}

/// Which of the two antagonistic stages of a junction a link feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    First,
    Second,
}

impl Stage {
    pub fn other(self) -> Stage {
        match self {
            Stage::First => Stage::Second,
            Stage::Second => Stage::First,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stage::First => 0,
            Stage::Second => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: JunctionId,
    /// `[first stage, second stage]`; validation rejects any other count.
    pub incoming: Vec<LinkId>,
    pub outgoing: Vec<LinkId>,
    /// q^max, veh/s.
    pub capacity: f64,
    /// Friction coefficient in `[0, 1]`.
    pub friction: f64,
    pub position: (f64, f64),
}

impl Junction {
    pub fn approach(&self, stage: Stage) -> LinkId {
        self.incoming[stage.index()]
    }

    pub fn stage_of(&self, link: LinkId) -> Option<Stage> {
        match self.incoming.iter().position(|&l| l == link) {
            Some(0) => Some(Stage::First),
            Some(1) => Some(Stage::Second),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnRatioTable {
    ratios: BTreeMap<(LinkId, LinkId), f64>,
}

impl TurnRatioTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, from: LinkId, to: LinkId, ratio: f64) {
        self.ratios.insert((from, to), ratio);
    }

    /// Ratio from `from` to `to`, zero when the movement does not exist.
    pub fn get(&self, from: LinkId, to: LinkId) -> f64 {
        self.ratios.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn has_movement(&self, from: LinkId, to: LinkId) -> bool {
        self.get(from, to) > 0.0
    }

    pub fn outgoing_sum(&self, from: LinkId) -> f64 {
        self.ratios
            .range((from, LinkId(0))..=(from, LinkId(u32::MAX)))
            .map(|(_, r)| r)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (LinkId, LinkId, f64)> + '_ {
        self.ratios.iter().map(|(&(a, b), &r)| (a, b, r))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Clockwise,
    Anticlockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitKind {
    Main,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    /// Links in travel order, starting from the smallest id.
    pub links: Vec<LinkId>,
    pub orientation: Orientation,
    pub kind: CircuitKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    /// Links where trips of this zone start.
    pub origins: Vec<LinkId>,
    /// Links where trips to this zone end.
    pub destinations: Vec<LinkId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub links: Vec<Link>,
    pub junctions: Vec<Junction>,
    pub turn_ratios: TurnRatioTable,
    pub circuits: Vec<Circuit>,
    pub zones: BTreeMap<String, Zone>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("link {0}: length must be positive")]
    LinkLength(LinkId),
    #[error("link {0}: saturation flow must be positive")]
    LinkSaturation(LinkId),
    #[error("link {0}: storage capacity must be at least 1")]
    LinkStorage(LinkId),
    #[error("link {link}: stored at index {index}")]
    LinkIndex { link: LinkId, index: usize },
    #[error("link {link} references unknown junction {junction}")]
    UnknownJunction { link: LinkId, junction: JunctionId },
    #[error("junction {junction}: stored at index {index}")]
    JunctionIndex { junction: JunctionId, index: usize },
    #[error("junction {junction}: expected 2 incoming links, found {count}")]
    StageCount { junction: JunctionId, count: usize },
    #[error("junction {junction} references unknown link {link}")]
    UnknownLink { junction: JunctionId, link: LinkId },
    #[error("junction {junction}: link {link} does not end at this junction")]
    IncomingMismatch { junction: JunctionId, link: LinkId },
    #[error("junction {junction}: link {link} does not start at this junction")]
    OutgoingMismatch { junction: JunctionId, link: LinkId },
    #[error("junction {junction}: friction {value} outside [0, 1]")]
    Friction { junction: JunctionId, value: f64 },
    #[error("junction {junction}: capacity {capacity} below max incoming saturation flow {max_saturation}")]
    Capacity {
        junction: JunctionId,
        capacity: f64,
        max_saturation: f64,
    },
    #[error("turn ratio {from}->{to} = {value} outside [0, 1]")]
    TurnRatioRange { from: LinkId, to: LinkId, value: f64 },
    #[error("turn ratios out of link {from} sum to {sum} > 1")]
    TurnRatioSum { from: LinkId, sum: f64 },
    #[error("turn ratio {from}->{to} is not a movement through a junction")]
    TurnRatioMovement { from: LinkId, to: LinkId },
    #[error("circuit {index} is not a directed cycle")]
    BrokenCircuit { index: usize },
    #[error("zone {zone} references unknown link {link}")]
    ZoneLink { zone: String, link: LinkId },
    #[error("link {link} belongs to zones {first} and {second}")]
    ZoneOverlap {
        link: LinkId,
        first: String,
        second: String,
    },
}

const RATIO_EPS: f64 = 1e-12;

impl NetworkModel {
    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn junction(&self, id: JunctionId) -> &Junction {
        &self.junctions[id.index()]
    }

    /// Links that feed a junction (everything except exit links), ascending.
    pub fn approach_links(&self) -> Vec<LinkId> {
        self.links.iter().filter(|l| !l.is_exit()).map(|l| l.id).collect()
    }

    /// The approach of a two-approach junction whose traffic arrives from
    /// the left of drivers on the other approach, then the other approach.
    pub fn left_right_approaches(&self, junction: JunctionId) -> Option<(LinkId, LinkId)> {
        let j = self.junction(junction);
        let [a, b] = j.incoming[..] else { return None };
        let (ha, hb) = (self.link(a).heading, self.link(b).heading);
        if ha == hb.clockwise() {
            Some((a, b))
        } else if hb == ha.clockwise() {
            Some((b, a))
        } else {
            None
        }
    }

    pub fn entry_links(&self) -> Vec<LinkId> {
        self.links.iter().filter(|l| l.is_entry()).map(|l| l.id).collect()
    }

    /// Set the friction coefficient on every junction.
    pub fn with_friction(mut self, friction: f64) -> Self {
        for j in &mut self.junctions {
            j.friction = friction;
        }
        self
    }

    /// Set q^max on every junction (veh/s).
    pub fn with_capacity(mut self, capacity: f64) -> Self {
        for j in &mut self.junctions {
            j.capacity = capacity;
        }
        self
    }

    /// Replace every existing movement's turning ratio by `ratio`.
    pub fn with_turn_ratio(mut self, ratio: f64) -> Self {
        let moves: Vec<_> = self.turn_ratios.iter().map(|(a, b, _)| (a, b)).collect();
        for (a, b) in moves {
            self.turn_ratios.set(a, b, ratio);
        }
        self
    }

    /// Check every structural invariant, collecting all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let nj = self.junctions.len();
        let nl = self.links.len();

        for (index, link) in self.links.iter().enumerate() {
            if link.id.index() != index {
                out.push(Violation::LinkIndex { link: link.id, index });
            }
            if !(link.length > 0.0) {
                out.push(Violation::LinkLength(link.id));
            }
            if !(link.saturation_flow > 0.0) {
                out.push(Violation::LinkSaturation(link.id));
            }
            if link.storage_capacity < 1 {
                out.push(Violation::LinkStorage(link.id));
            }
            for junction in [link.from, link.to].into_iter().flatten() {
                if junction.index() >= nj {
                    out.push(Violation::UnknownJunction {
                        link: link.id,
                        junction,
                    });
                }
            }
        }

        for (index, j) in self.junctions.iter().enumerate() {
            if j.id.index() != index {
                out.push(Violation::JunctionIndex { junction: j.id, index });
            }
            if j.incoming.len() != 2 {
                out.push(Violation::StageCount {
                    junction: j.id,
                    count: j.incoming.len(),
                });
            }
            if !(0.0..=1.0).contains(&j.friction) {
                out.push(Violation::Friction {
                    junction: j.id,
                    value: j.friction,
                });
            }
            let mut max_saturation = 0.0_f64;
            for &l in &j.incoming {
                if l.index() >= nl {
                    out.push(Violation::UnknownLink {
                        junction: j.id,
                        link: l,
                    });
                    continue;
                }
                let link = self.link(l);
                max_saturation = max_saturation.max(link.saturation_flow);
                if link.to != Some(j.id) {
                    out.push(Violation::IncomingMismatch {
                        junction: j.id,
                        link: l,
                    });
                }
            }
            for &l in &j.outgoing {
                if l.index() >= nl {
                    out.push(Violation::UnknownLink {
                        junction: j.id,
                        link: l,
                    });
                } else if self.link(l).from != Some(j.id) {
                    out.push(Violation::OutgoingMismatch {
                        junction: j.id,
                        link: l,
                    });
                }
            }
            if j.capacity < max_saturation {
                out.push(Violation::Capacity {
                    junction: j.id,
                    capacity: j.capacity,
                    max_saturation,
                });
            }
        }

        let mut sums: BTreeMap<LinkId, f64> = BTreeMap::new();
        for (from, to, value) in self.turn_ratios.iter() {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::TurnRatioRange { from, to, value });
            }
            *sums.entry(from).or_default() += value;
            let through_junction = from.index() < nl
                && to.index() < nl
                && self.link(from).to.is_some()
                && self.link(from).to == self.link(to).from;
            if !through_junction {
                out.push(Violation::TurnRatioMovement { from, to });
            }
        }
        for (from, sum) in sums {
            if sum > 1.0 + RATIO_EPS {
                out.push(Violation::TurnRatioSum { from, sum });
            }
        }

        for (index, c) in self.circuits.iter().enumerate() {
            let closed = !c.links.is_empty()
                && c.links.iter().all(|l| l.index() < nl)
                && c.links.iter().enumerate().all(|(i, &l)| {
                    let next = c.links[(i + 1) % c.links.len()];
                    self.link(l).to.is_some() && self.link(l).to == self.link(next).from
                });
            if !closed {
                out.push(Violation::BrokenCircuit { index });
            }
        }

        let mut owner: BTreeMap<LinkId, &str> = BTreeMap::new();
        for (name, zone) in &self.zones {
            let members: BTreeSet<LinkId> = zone.origins.iter().chain(&zone.destinations).copied().collect();
            for link in members {
                if link.index() >= nl {
                    out.push(Violation::ZoneLink {
                        zone: name.clone(),
                        link,
                    });
                }
                if let Some(first) = owner.insert(link, name) {
                    out.push(Violation::ZoneOverlap {
                        link,
                        first: first.to_string(),
                        second: name.clone(),
                    });
                }
            }
        }

        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().map_err(Error::InvalidNetwork)
    }

    /// Write junctions as a node table.
    pub fn write_nodes_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "junction",
            "x_m",
            "y_m",
            "first",
            "second",
            "outgoing",
            "capacity_veh_s",
            "friction",
        ])?;
        for j in &self.junctions {
            let outgoing = j.outgoing.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
            let first = j.incoming.first().map(ToString::to_string).unwrap_or_default();
            let second = j.incoming.get(1).map(ToString::to_string).unwrap_or_default();
            out.write_record([
                j.id.to_string(),
                format!("{:.1}", j.position.0),
                format!("{:.1}", j.position.1),
                first,
                second,
                outgoing,
                format!("{:.6}", j.capacity),
                format!("{:.3}", j.friction),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Write links as an edge table.
    pub fn write_edges_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "link",
            "from",
            "to",
            "heading",
            "length_m",
            "sat_flow_veh_s",
            "storage_veh",
            "entry",
            "exit",
        ])?;
        let end = |j: Option<JunctionId>| j.map(|j| j.to_string()).unwrap_or_else(|| "-".into());
        for l in &self.links {
            out.write_record([
                l.id.to_string(),
                end(l.from),
                end(l.to),
                format!("{:?}", l.heading),
                format!("{:.1}", l.length),
                format!("{:.6}", l.saturation_flow),
                l.storage_capacity.to_string(),
                l.is_entry().to_string(),
                l.is_exit().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn default_storage_capacity(length: f64) -> u32 {
    ((length / JAM_SPACING_M).floor() as u32).max(1)
}

/// Build the alternating one-way grid of `rows` horizontal and `cols`
/// vertical roads. Horizontal road `i` runs east when `i` is even; vertical
/// road `j` runs south when `j` is odd, which makes the innermost cell of a
/// 4x4 grid an anticlockwise circuit surrounded by clockwise ones.
pub fn build_grid(rows: usize, cols: usize, link_length: f64, sat_flow: f64) -> Result<NetworkModel> {
    if rows < 2 || cols < 2 {
        return Err(Error::GridTooSmall { rows, cols });
    }
    if !(link_length > 0.0) || !(sat_flow > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "link length {link_length} and saturation flow {sat_flow} must be positive"
        )));
    }

    let eastbound = |i: usize| i.is_multiple_of(2);
    let southbound = |j: usize| j % 2 == 1;
    let jid = |i: usize, j: usize| JunctionId((i * cols + j) as u32);
    let h = |i: usize, k: usize| LinkId((i * (cols + 1) + k) as u32);
    let v = |j: usize, k: usize| LinkId((rows * (cols + 1) + j * (rows + 1) + k) as u32);
    let storage = default_storage_capacity(link_length);

    let mut links = Vec::with_capacity(rows * (cols + 1) + cols * (rows + 1));
    for i in 0..rows {
        for k in 0..=cols {
            let west = (k >= 1).then(|| jid(i, k - 1));
            let east = (k < cols).then(|| jid(i, k));
            let (from, to, heading) = if eastbound(i) {
                (west, east, Heading::East)
            } else {
                (east, west, Heading::West)
            };
            links.push(Link {
                id: h(i, k),
                length: link_length,
                saturation_flow: sat_flow,
                storage_capacity: storage,
                from,
                to,
                heading,
            });
        }
    }
    for j in 0..cols {
        for k in 0..=rows {
            let north = (k >= 1).then(|| jid(k - 1, j));
            let south = (k < rows).then(|| jid(k, j));
            let (from, to, heading) = if southbound(j) {
                (north, south, Heading::South)
            } else {
                (south, north, Heading::North)
            };
            links.push(Link {
                id: v(j, k),
                length: link_length,
                saturation_flow: sat_flow,
                storage_capacity: storage,
                from,
                to,
                heading,
            });
        }
    }

    let mut junctions = Vec::with_capacity(rows * cols);
    let mut turn_ratios = TurnRatioTable::new();
    for i in 0..rows {
        for j in 0..cols {
            let (h_in, h_out) = if eastbound(i) {
                (h(i, j), h(i, j + 1))
            } else {
                (h(i, j + 1), h(i, j))
            };
            let (v_in, v_out) = if southbound(j) {
                (v(j, i), v(j, i + 1))
            } else {
                (v(j, i + 1), v(j, i))
            };
            let mut incoming = vec![h_in, v_in];
            incoming.sort_by_key(|&l| links[l.index()].heading.arrival_rank());
            let outgoing = vec![h_out.min(v_out), h_out.max(v_out)];
            for &a in &incoming {
                for &b in &outgoing {
                    turn_ratios.set(a, b, 0.5);
                }
            }
            junctions.push(Junction {
                id: jid(i, j),
                incoming,
                outgoing,
                capacity: DEFAULT_CAPACITY_FACTOR * sat_flow,
                friction: 1.0,
                position: (j as f64 * link_length, -(i as f64) * link_length),
            });
        }
    }

    let mut net = NetworkModel {
        links,
        junctions,
        turn_ratios,
        circuits: Vec::new(),
        zones: BTreeMap::new(),
    };
    net.circuits = find_circuits(&net);

    let mut sides: BTreeMap<String, Zone> = SIDE_ZONES.iter().map(|s| (s.to_string(), Zone::default())).collect();
    for link in &net.links {
        if link.is_entry() == link.is_exit() {
            continue;
        }
        let side_heading = if link.is_entry() {
            link.heading.opposite()
        } else {
            link.heading
        };
        let side = match side_heading {
            Heading::North => "north",
            Heading::East => "east",
            Heading::South => "south",
            Heading::West => "west",
        };
        let zone = sides.get_mut(side).expect("side zone");
        if link.is_entry() {
            zone.origins.push(link.id);
        } else {
            zone.destinations.push(link.id);
        }
    }
    if let Some(main) = net.circuits.iter().find(|c| c.kind == CircuitKind::Main) {
        let mut central: Vec<LinkId> = main.links.clone();
        central.sort();
        sides.insert(
            CENTRAL_ZONE.to_string(),
            Zone {
                origins: central.clone(),
                destinations: central,
            },
        );
    }
    net.zones = sides;
    Ok(net)
}

/// Find every directed cycle that bounds a single cell of the junction
/// graph: four-link cycles with no junction strictly inside. Orientation
/// comes from the signed area of the junction polygon; the cycle closest
/// to the centroid of all junctions is the main circuit.
pub fn find_circuits(net: &NetworkModel) -> Vec<Circuit> {
    let nj = net.junctions.len();
    let mut succ: Vec<Vec<(usize, LinkId)>> = vec![Vec::new(); nj];
    for link in &net.links {
        if let (Some(a), Some(b)) = (link.from, link.to) {
            if a.index() < nj && b.index() < nj {
                succ[a.index()].push((b.index(), link.id));
            }
        }
    }

    let mut cycles: Vec<(Vec<usize>, Vec<LinkId>)> = Vec::new();
    for start in 0..nj {
        let mut nodes = vec![start];
        let mut edges = Vec::new();
        four_cycles_from(start, &succ, &mut nodes, &mut edges, &mut cycles);
    }

    let pos = |j: usize| net.junctions[j].position;
    let mut found: Vec<(f64, f64, Circuit)> = Vec::new();
    for (nodes, mut links) in cycles {
        let poly: Vec<(f64, f64)> = nodes.iter().map(|&j| pos(j)).collect();
        let encloses_other = (0..nj)
            .filter(|j| !nodes.contains(j))
            .any(|j| strictly_inside(pos(j), &poly));
        if encloses_other {
            continue;
        }
        let area = signed_area(&poly);
        let orientation = if area > 0.0 {
            Orientation::Anticlockwise
        } else {
            Orientation::Clockwise
        };
        let k = poly.len() as f64;
        let cx = poly.iter().map(|p| p.0).sum::<f64>() / k;
        let cy = poly.iter().map(|p| p.1).sum::<f64>() / k;
        let smallest = (0..links.len()).min_by_key(|&i| links[i]).unwrap_or(0);
        links.rotate_left(smallest);
        found.push((
            cx,
            cy,
            Circuit {
                links,
                orientation,
                kind: CircuitKind::Secondary,
            },
        ));
    }

    // North to south, then west to east.
    found.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));

    if nj > 0 {
        let mx = net.junctions.iter().map(|j| j.position.0).sum::<f64>() / nj as f64;
        let my = net.junctions.iter().map(|j| j.position.1).sum::<f64>() / nj as f64;
        let main = found
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (a.0 - mx).powi(2) + (a.1 - my).powi(2);
                let db = (b.0 - mx).powi(2) + (b.1 - my).powi(2);
                da.total_cmp(&db)
            })
            .map(|(i, _)| i);
        if let Some(i) = main {
            found[i].2.kind = CircuitKind::Main;
        }
    }
    found.into_iter().map(|(_, _, c)| c).collect()
}

fn four_cycles_from(
    start: usize,
    succ: &[Vec<(usize, LinkId)>],
    nodes: &mut Vec<usize>,
    edges: &mut Vec<LinkId>,
    out: &mut Vec<(Vec<usize>, Vec<LinkId>)>,
) {
    let here = *nodes.last().expect("non-empty path");
    for &(next, link) in &succ[here] {
        if edges.len() == 3 {
            if next == start {
                let mut e = edges.clone();
                e.push(link);
                out.push((nodes.clone(), e));
            }
            continue;
        }
        // Each cycle is reported once, from its smallest junction.
        if next <= start || nodes.contains(&next) {
            continue;
        }
        nodes.push(next);
        edges.push(link);
        four_cycles_from(start, succ, nodes, edges, out);
        nodes.pop();
        edges.pop();
    }
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

fn strictly_inside(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    // Points on the boundary are not inside.
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        let within = p.0 >= a.0.min(b.0) - 1e-9
            && p.0 <= a.0.max(b.0) + 1e-9
            && p.1 >= a.1.min(b.1) - 1e-9
            && p.1 <= a.1.max(b.1) + 1e-9;
        if cross.abs() < 1e-9 && within {
            return false;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}
