use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::net::{LinkId, NetworkModel, CENTRAL_ZONE, SIDE_ZONES};

/// Zone name accepted in demand entries as shorthand for every side zone.
pub const OTHER_ZONES: &str = "other";

/// Origin-destination rates between named zones, in vehicles per hour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DemandTable {
    rates: BTreeMap<(String, String), f64>,
}

impl DemandTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `veh_h` to every pair the two names expand to. `"other"` expands
    /// to the four side zones; pairs with equal zones are skipped.
    pub fn add(&mut self, from: &str, to: &str, veh_h: f64) -> Result<()> {
        if !(veh_h >= 0.0) || !veh_h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "demand {from} -> {to} must be a finite non-negative rate, got {veh_h}"
            )));
        }
        for o in expand(from) {
            for d in expand(to) {
                if o != d {
                    *self.rates.entry((o.clone(), d)).or_insert(0.0) += veh_h;
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, from: &str, to: &str) -> f64 {
        self.rates
            .get(&(from.to_string(), to.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.rates.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.rates.iter().map(|((o, d), r)| (o.as_str(), d.as_str(), *r))
    }

    /// Names every zone missing from the network or lacking links.
    pub fn check_zones(&self, net: &NetworkModel) -> Result<()> {
        let mut problems = Vec::new();
        for (o, d, r) in self.iter() {
            if r == 0.0 {
                continue;
            }
            match net.zones.get(o) {
                Some(z) if !z.origins.is_empty() => {}
                _ => problems.push(format!("demand origin zone '{o}' has no origin links")),
            }
            match net.zones.get(d) {
                Some(z) if !z.destinations.is_empty() => {}
                _ => problems.push(format!("demand destination zone '{d}' has no destination links")),
            }
        }
        problems.dedup();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }
}

fn expand(zone: &str) -> Vec<String> {
    if zone == OTHER_ZONES {
        SIDE_ZONES.iter().map(|s| s.to_string()).collect()
    } else {
        vec![zone.to_string()]
    }
}

/// One demand arrival, resolved to concrete links.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub origin: LinkId,
    pub destination: LinkId,
}

/// Poisson sampler over the nonzero OD pairs of a table.
#[derive(Debug, Clone)]
pub struct DemandSampler {
    pairs: Vec<(Vec<LinkId>, Vec<LinkId>, Poisson<f64>)>,
}

impl DemandSampler {
    pub fn new(table: &DemandTable, net: &NetworkModel, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        table.check_zones(net)?;
        let mut pairs = Vec::new();
        for (o, d, veh_h) in table.iter() {
            if veh_h == 0.0 {
                continue;
            }
            let mean = veh_h / 3600.0 * dt;
            let dist = Poisson::new(mean).map_err(|e| Error::InvalidArgument(format!("demand {o} -> {d}: {e}")))?;
            pairs.push((net.zones[o].origins.clone(), net.zones[d].destinations.clone(), dist));
        }
        Ok(Self { pairs })
    }

    /// Draw this step's arrivals, pair by pair in table order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<Arrival>) {
        for (origins, dests, dist) in &self.pairs {
            let n = dist.sample(rng) as u64;
            for _ in 0..n {
                let origin = origins[rng.random_range(0..origins.len())];
                let destination = dests[rng.random_range(0..dests.len())];
                out.push(Arrival { origin, destination });
            }
        }
    }
}

/// Default origin-destination table: light traffic to and from the central
/// zone, heavier traffic between the side zones.
pub fn baseline_demand(central_veh_h: f64, side_veh_h: f64) -> DemandTable {
    let mut t = DemandTable::new();
    t.add(CENTRAL_ZONE, OTHER_ZONES, central_veh_h).expect("finite rate");
    t.add(OTHER_ZONES, CENTRAL_ZONE, central_veh_h).expect("finite rate");
    t.add(OTHER_ZONES, OTHER_ZONES, side_veh_h).expect("finite rate");
    t
}
