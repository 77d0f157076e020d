//! Network geometry and the received-energy channel model.
//!
//! Secondary users (SUs) sit at fixed positions in a rectangular region. A
//! transmitter (the primary user or the attacker emulating it) with energy
//! `P_t` is received at distance `r` with energy
//!
//! ```text
//! P_r = P_t * r^(-alpha) * exp(a * beta),   a = ln(10) / 10,   beta ~ N(0, sigma2)
//! ```
//!
//! and every SU reports `10 log10(P_r)` to the fusion center. Since
//! `10 log10(exp(a * beta)) = beta`, the report is Gaussian in dB with mean
//! `10 log10(P_t) - 10 alpha log10(r)` and variance `sigma2`.

use std::f64::consts::{LN_10, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

/// Scale factor `a` of the shadowing term `exp(a * beta)`.
pub const SHADOWING_SCALE: f64 = LN_10 / 10.0;

/// Retry budget for rejection sampling of positions.
const MAX_PLACEMENT_TRIES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned region `[0, width] x [0, height]` occupied by the SUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub width: f64,
    pub height: f64,
}

impl Region {
    pub const fn square(side: f64) -> Self {
        Self { width: side, height: side }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn center(&self) -> Position {
        Position::new(self.width / 2.0, self.height / 2.0)
    }
}

impl Default for Region {
    fn default() -> Self {
        Region::square(100.0)
    }
}

/// Transmit energy and shadowing variance of one transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitterProfile {
    pub position: Position,
    /// Transmit energy `P_t` in linear units.
    pub tx_power: f64,
    /// Shadowing variance in dB².
    pub sigma2: f64,
}

impl TransmitterProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.tx_power > 0.0 && self.tx_power.is_finite()) {
            return Err(Error::param("tx_power", format!("must be positive, got {}", self.tx_power)));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::param("sigma2", format!("must be non-negative, got {}", self.sigma2)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Path-loss exponent.
    pub alpha: f64,
    /// Smallest admissible transmitter-to-SU distance.
    pub min_distance: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self { alpha: 4.0, min_distance: 0.5 }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.min_distance > 0.0 && self.min_distance.is_finite()) {
            return Err(Error::param("min_distance", format!("must be positive, got {}", self.min_distance)));
        }
        Ok(())
    }
}

/// Where the PU and the attacker sit relative to the SU region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placement {
    InsideRegion,
    OutsideRegion,
}

impl Placement {
    pub const ALL: [Placement; 2] = [Placement::InsideRegion, Placement::OutsideRegion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Placement::InsideRegion => "inside",
            Placement::OutsideRegion => "outside",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inside" | "inside_region" => Ok(Placement::InsideRegion),
            "outside" | "outside_region" => Ok(Placement::OutsideRegion),
            other => Err(Error::param("placement", format!("expected `inside` or `outside`, got `{other}`"))),
        }
    }
}

/// Which transmitter is active in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Pu,
    Attacker,
}

/// Inputs of [`generate_topology`] besides the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyConfig {
    pub n_sus: usize,
    pub region: Region,
    pub placement: Placement,
    /// Distance `D` between PU and attacker.
    pub distance: f64,
    pub pu_tx_power: f64,
    pub pu_sigma2: f64,
    pub attacker_tx_power: f64,
    pub attacker_sigma2: f64,
    /// PU location used by [`Placement::OutsideRegion`].
    pub outside_pu: Position,
    pub min_distance: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_sus: 40,
            region: Region::default(),
            placement: Placement::InsideRegion,
            distance: 5.0,
            pu_tx_power: 10.0,
            pu_sigma2: 8.0,
            attacker_tx_power: 10.0,
            attacker_sigma2: 8.0,
            outside_pu: Position::new(150.0, 150.0),
            min_distance: ChannelParams::default().min_distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub region: Region,
    pub su_positions: Vec<Position>,
    pub pu: TransmitterProfile,
    pub attacker: TransmitterProfile,
    pub placement: Placement,
    pub d_pu_attacker: f64,
}

impl Topology {
    pub fn n_sus(&self) -> usize {
        self.su_positions.len()
    }

    pub fn transmitter(&self, source: Source) -> &TransmitterProfile {
        match source {
            Source::Pu => &self.pu,
            Source::Attacker => &self.attacker,
        }
    }

    /// Distances from `source` to every SU, in SU order.
    pub fn distances(&self, source: Source) -> Vec<f64> {
        let tx = self.transmitter(source).position;
        self.su_positions.iter().map(|p| p.distance(&tx)).collect()
    }
}

/// One sensing slot as seen by the fusion center.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotReport {
    pub slot_id: u64,
    pub energies_db: Vec<f64>,
    pub source: Source,
}

fn clear_of(p: &Position, sus: &[Position], min_distance: f64) -> bool {
    sus.iter().all(|s| s.distance(p) >= min_distance)
}

/// Places `n_sus` distinct SUs uniformly in the region, then the PU and the
/// attacker according to `cfg.placement`.
///
/// Draw order is SUs, PU, attacker, so for a fixed seed the SU and PU
/// positions do not depend on `cfg.distance`.
pub fn generate_topology(cfg: &TopologyConfig, seed: u64) -> Result<Topology> {
    if cfg.n_sus < 2 {
        return Err(Error::param("n_sus", format!("need at least 2 SUs, got {}", cfg.n_sus)));
    }
    if !(cfg.distance > 0.0 && cfg.distance.is_finite()) {
        return Err(Error::param("distance", format!("must be positive, got {}", cfg.distance)));
    }
    if !(cfg.region.width > 0.0 && cfg.region.height > 0.0) {
        return Err(Error::param("region", "extent must be positive"));
    }
    if !(cfg.min_distance > 0.0) {
        return Err(Error::param("min_distance", "must be positive"));
    }

    let mut rng = rng::seeded(seed);
    let region = cfg.region;
    let uniform_point =
        |rng: &mut rng::Rng| Position::new(rng.random::<f64>() * region.width, rng.random::<f64>() * region.height);

    let mut sus: Vec<Position> = Vec::with_capacity(cfg.n_sus);
    let mut tries = 0;
    while sus.len() < cfg.n_sus {
        tries += 1;
        if tries > MAX_PLACEMENT_TRIES {
            return Err(Error::Degenerate(format!("could not place {} distinct SUs", cfg.n_sus)));
        }
        let p = uniform_point(&mut rng);
        if !sus.contains(&p) {
            sus.push(p);
        }
    }

    let pu_position = match cfg.placement {
        Placement::InsideRegion => {
            let mut found = None;
            for _ in 0..MAX_PLACEMENT_TRIES {
                let p = uniform_point(&mut rng);
                if clear_of(&p, &sus, cfg.min_distance) {
                    found = Some(p);
                    break;
                }
            }
            found.ok_or_else(|| Error::Degenerate("no PU location clear of every SU".into()))?
        }
        Placement::OutsideRegion => {
            let p = cfg.outside_pu;
            if region.contains(&p) {
                return Err(Error::param("outside_pu", "position lies inside the SU region"));
            }
            if !clear_of(&p, &sus, cfg.min_distance) {
                return Err(Error::Degenerate("outside PU position is on top of an SU".into()));
            }
            p
        }
    };

    let attacker_position = match cfg.placement {
        Placement::InsideRegion => {
            let mut found = None;
            for _ in 0..MAX_PLACEMENT_TRIES {
                let theta = rng.random::<f64>() * TAU;
                let p = Position::new(
                    pu_position.x + cfg.distance * theta.cos(),
                    pu_position.y + cfg.distance * theta.sin(),
                );
                if region.contains(&p) && clear_of(&p, &sus, cfg.min_distance) {
                    found = Some(p);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Degenerate(format!("no attacker location inside the region at distance {}", cfg.distance))
            })?
        }
        Placement::OutsideRegion => {
            let c = region.center();
            let len = pu_position.distance(&c);
            let p = Position::new(
                pu_position.x + cfg.distance * (c.x - pu_position.x) / len,
                pu_position.y + cfg.distance * (c.y - pu_position.y) / len,
            );
            if !clear_of(&p, &sus, cfg.min_distance) {
                return Err(Error::Degenerate(format!(
                    "attacker at distance {} from the PU lands on top of an SU",
                    cfg.distance
                )));
            }
            p
        }
    };

    let pu = TransmitterProfile { position: pu_position, tx_power: cfg.pu_tx_power, sigma2: cfg.pu_sigma2 };
    let attacker = TransmitterProfile {
        position: attacker_position,
        tx_power: cfg.attacker_tx_power,
        sigma2: cfg.attacker_sigma2,
    };
    pu.validate()?;
    attacker.validate()?;

    Ok(Topology {
        region,
        su_positions: sus,
        pu,
        attacker,
        placement: cfg.placement,
        d_pu_attacker: pu_position.distance(&attacker_position),
    })
}

/// Received energy in dB for a given shadowing draw `beta` (dB).
///
/// Evaluated in the dB domain: `10 log10(P_t) - 10 alpha log10(r) + beta`,
/// which is `10 log10(P_t r^-alpha e^(a beta))` without the risk of
/// underflow at large distances.
pub fn energy_db_with_shadowing(tx: &TransmitterProfile, r: f64, ch: &ChannelParams, beta: f64) -> Result<f64> {
    if !(r >= ch.min_distance) {
        return Err(Error::DistanceFloor { distance: r, min_distance: ch.min_distance });
    }
    Ok(10.0 * tx.tx_power.log10() - 10.0 * ch.alpha * r.log10() + beta)
}

/// Draws `beta ~ N(0, tx.sigma2)` and returns the received energy in dB.
pub fn received_energy_db<R: Rng + ?Sized>(
    tx: &TransmitterProfile,
    r: f64,
    ch: &ChannelParams,
    rng: &mut R,
) -> Result<f64> {
    let z: f64 = rng.sample(StandardNormal);
    energy_db_with_shadowing(tx, r, ch, z * tx.sigma2.sqrt())
}

/// Simulates `num_slots` sensing slots with `source` transmitting.
///
/// Slot `t` draws its `n` shadowing terms, in SU order, from the substream
/// `(seed, t)`; output is identical for any thread count.
pub fn simulate_slots(
    topology: &Topology,
    source: Source,
    num_slots: usize,
    ch: &ChannelParams,
    seed: u64,
) -> Result<Vec<SlotReport>> {
    if num_slots == 0 {
        return Err(Error::param("num_slots", "must be at least 1"));
    }
    ch.validate()?;
    let tx = topology.transmitter(source);
    tx.validate()?;
    let distances = topology.distances(source);
    if let Some(&r) = distances.iter().find(|&&r| r < ch.min_distance) {
        return Err(Error::DistanceFloor { distance: r, min_distance: ch.min_distance });
    }

    (0..num_slots as u64)
        .into_par_iter()
        .map(|slot_id| {
            let mut rng = rng::substream(seed, &[slot_id]);
            let energies_db =
                distances.iter().map(|&r| received_energy_db(tx, r, ch, &mut rng)).collect::<Result<Vec<_>>>()?;
            Ok(SlotReport { slot_id, energies_db, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pu(sigma2: f64) -> TransmitterProfile {
        TransmitterProfile { position: Position::new(0.0, 0.0), tx_power: 10.0, sigma2 }
    }

    #[test]
    fn unit_distance_without_shadowing_is_transmit_power() {
        let e = energy_db_with_shadowing(&pu(8.0), 1.0, &ChannelParams::default(), 0.0).unwrap();
        assert_abs_diff_eq!(e, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn distance_two_matches_linear_formula() {
        let e = energy_db_with_shadowing(&pu(8.0), 2.0, &ChannelParams::default(), 0.0).unwrap();
        assert_abs_diff_eq!(e, 10.0 * 0.625f64.log10(), epsilon = 1e-12);
        assert_abs_diff_eq!(e, -2.0412, epsilon = 1e-4);
    }

    #[test]
    fn db_form_agrees_with_linear_form() {
        let ch = ChannelParams { alpha: 3.3, min_distance: 0.5 };
        for &(r, beta) in &[(0.7, -3.0), (12.0, 1.5), (80.0, 0.0)] {
            let linear = 10.0 * (10.0 * f64::powf(r, -ch.alpha) * (SHADOWING_SCALE * beta).exp()).log10();
            let e = energy_db_with_shadowing(&pu(8.0), r, &ch, beta).unwrap();
            assert_abs_diff_eq!(e, linear, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_distance_below_floor() {
        let err = energy_db_with_shadowing(&pu(8.0), 0.1, &ChannelParams::default(), 0.0).unwrap_err();
        assert!(matches!(err, Error::DistanceFloor { .. }));
    }

    #[test]
    fn monte_carlo_mean_at_ten_units() {
        let mut rng = rng::seeded(3);
        let n = 100_000;
        let ch = ChannelParams::default();
        let mean = (0..n).map(|_| received_energy_db(&pu(8.0), 10.0, &ch, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - -30.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn inside_topology_respects_geometry() {
        let cfg = TopologyConfig { n_sus: 40, distance: 5.0, ..Default::default() };
        let t = generate_topology(&cfg, 7).unwrap();
        assert_eq!(t.n_sus(), 40);
        assert!(t.su_positions.iter().all(|p| t.region.contains(p)));
        assert!(t.region.contains(&t.pu.position));
        assert!(t.region.contains(&t.attacker.position));
        assert_abs_diff_eq!(t.pu.position.distance(&t.attacker.position), 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.d_pu_attacker, 5.0, epsilon = 1e-9);
    }

    #[test]
    fn outside_topology_places_both_transmitters_outside() {
        let cfg =
            TopologyConfig { n_sus: 2, placement: Placement::OutsideRegion, distance: 10.0, ..Default::default() };
        let t = generate_topology(&cfg, 1).unwrap();
        assert!(!t.region.contains(&t.pu.position));
        assert!(!t.region.contains(&t.attacker.position));
        assert_abs_diff_eq!(t.d_pu_attacker, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn topology_is_deterministic() {
        let cfg = TopologyConfig::default();
        assert_eq!(generate_topology(&cfg, 11).unwrap(), generate_topology(&cfg, 11).unwrap());
    }

    #[test]
    fn su_and_pu_positions_do_not_depend_on_distance() {
        let a = generate_topology(&TopologyConfig { distance: 5.0, ..Default::default() }, 4).unwrap();
        let b = generate_topology(&TopologyConfig { distance: 20.0, ..Default::default() }, 4).unwrap();
        assert_eq!(a.su_positions, b.su_positions);
        assert_eq!(a.pu, b.pu);
        assert_ne!(a.attacker.position, b.attacker.position);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(generate_topology(&TopologyConfig { n_sus: 1, ..Default::default() }, 0).is_err());
        assert!(generate_topology(&TopologyConfig { distance: 0.0, ..Default::default() }, 0).is_err());
        // No point of a 100x100 square is 500 units from an interior PU.
        let far = TopologyConfig { distance: 500.0, ..Default::default() };
        assert!(matches!(generate_topology(&far, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_shadowing_equal_distances_gives_identical_reports() {
        let topo = Topology {
            region: Region::default(),
            su_positions: vec![Position::new(10.0, 0.0), Position::new(0.0, 10.0), Position::new(-10.0, 0.0)],
            pu: pu(8.0),
            attacker: TransmitterProfile { sigma2: 0.0, ..pu(0.0) },
            placement: Placement::InsideRegion,
            d_pu_attacker: 0.0,
        };
        let slots = simulate_slots(&topo, Source::Attacker, 1, &ChannelParams::default(), 5).unwrap();
        let e = &slots[0].energies_db;
        assert_eq!(e.len(), 3);
        assert!(e.iter().all(|&v| v == e[0]));
        assert_abs_diff_eq!(e[0], -30.0, epsilon = 1e-12);
    }

    #[test]
    fn simulate_rejects_zero_slots() {
        let topo = generate_topology(&TopologyConfig::default(), 1).unwrap();
        assert!(simulate_slots(&topo, Source::Pu, 0, &ChannelParams::default(), 1).is_err());
    }
}
