//! Synthetic UWB deployments: anchor geometry, a constant-speed tag
//! trajectory, per-link multipath channel realizations, rendered CIRs, and
//! synchronized receive timestamps with obstruction-induced bias.
//!
//! Every record draws from its own counter-based random stream keyed by
//! `(time_idx, anchor_id)`, so generation order never affects the output.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // required in pure no_std builds; std in the graph shadows these with inherent methods
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Weibull};

use crate::data::{
    AnchorId, AnchorNode, CirRecord, Dataset, GroundTruthSample, SourceKey, TimeIdx, ZoneTag,
    MAX_SIGNALS_PER_BURST, MIN_TAPS,
};
use crate::error::ConfigError;
use crate::geom::{Aabb, Vec3};
use crate::seed::{derive_seed, record_stream};
use crate::SPEED_OF_LIGHT;

/// One multipath arrival: amplitude coefficient and absolute delay in
/// seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub alpha: f64,
    pub tau: f64,
}

/// The multipath channel of one tag-anchor link at one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRealization {
    /// Arrivals sorted by delay ascending; the direct (possibly obstructed)
    /// path comes first.
    pub paths: Vec<PathComponent>,
    pub is_nlos: bool,
    /// Straight-line time of flight, seconds.
    pub true_tof: f64,
}

/// Full description of a synthetic capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub anchors: Vec<AnchorNode>,
    /// Trajectory corners the tag visits in order, metres.
    pub waypoints: Vec<Vec3>,
    /// Tag speed along the polyline, m/s.
    pub speed: f64,
    /// Burst rate, Hz.
    pub sample_rate: f64,
    /// Obstructed regions: a link crossing any box is non-line-of-sight and a
    /// tag inside any box is in the warehouse zone.
    pub nlos_regions: Vec<Aabb>,
    pub seed: u64,
    /// Additive white Gaussian tap noise, linear units.
    pub noise_sigma: f64,
    /// Clock synchronization jitter on receive timestamps, nanoseconds.
    pub sync_jitter_ns: f64,
    /// Mean extra delay of an obstructed direct path, nanoseconds.
    pub nlos_excess_delay_mean_ns: f64,
    /// Amplitude attenuation of an obstructed direct path, dB.
    pub nlos_first_path_atten_db: f64,
    /// Arrivals per link including the direct path.
    pub paths_per_link: usize,
    /// Mean reflection delay and power-decay constant, nanoseconds.
    pub decay_const_ns: f64,
    /// Gaussian pulse standard deviation, in taps.
    pub pulse_width_taps: f64,
    /// Tap spacing, nanoseconds.
    pub t_s_ns: f64,
    /// Accumulator length in taps.
    pub taps_len: usize,
    /// Anchors farther than this from the tag do not record, metres.
    pub max_range_m: f64,
    /// Cap on the summed reflection amplitude of line-of-sight links, keeping
    /// the direct path the strongest arrival there.
    pub los_reflection_cap: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.anchors.len() < 4 {
            return Err(ConfigError(format!(
                "need at least 4 anchors, got {}",
                self.anchors.len()
            )));
        }
        if self.waypoints.len() < 2 {
            return Err(ConfigError("need at least 2 waypoints".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(ConfigError("speed must be positive".into()));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(ConfigError("sample rate must be positive".into()));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("sync_jitter_ns", self.sync_jitter_ns),
            ("nlos_excess_delay_mean_ns", self.nlos_excess_delay_mean_ns),
            ("nlos_first_path_atten_db", self.nlos_first_path_atten_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.paths_per_link < 1 {
            return Err(ConfigError("paths_per_link must be at least 1".into()));
        }
        if !(self.decay_const_ns > 0.0 && self.decay_const_ns.is_finite()) {
            return Err(ConfigError("decay_const_ns must be positive".into()));
        }
        if !(self.pulse_width_taps > 0.0 && self.pulse_width_taps.is_finite()) {
            return Err(ConfigError("pulse_width_taps must be positive".into()));
        }
        if !(self.t_s_ns > 0.0 && self.t_s_ns.is_finite()) {
            return Err(ConfigError("t_s_ns must be positive".into()));
        }
        if self.taps_len < MIN_TAPS {
            return Err(ConfigError(format!(
                "taps_len must be at least {MIN_TAPS}, got {}",
                self.taps_len
            )));
        }
        if !(self.max_range_m > 0.0 && self.max_range_m.is_finite()) {
            return Err(ConfigError("max_range_m must be positive".into()));
        }
        if !(self.los_reflection_cap > 0.0 && self.los_reflection_cap < 1.0) {
            return Err(ConfigError(
                "los_reflection_cap must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }

    /// Two-zone reference deployment: a 10 x 10 m open area (x < 10) next to
    /// a 15 x 10 m warehouse (x > 10) holding four shelving blocks, ten
    /// perimeter anchors at z = 2.5 m, and a serpentine tag path at z = 1 m
    /// crossing both zones and two of the blocks.
    pub fn default_deployment() -> Self {
        let mut anchors = Vec::new();
        for (i, x) in [0.0, 6.25, 12.5, 18.75, 25.0].iter().enumerate() {
            anchors.push(AnchorNode {
                anchor_id: (2 * i) as AnchorId,
                position: Vec3::new(*x, 0.0, 2.5),
            });
            anchors.push(AnchorNode {
                anchor_id: (2 * i + 1) as AnchorId,
                position: Vec3::new(*x, 10.0, 2.5),
            });
        }
        let shelf = |x0: f64, y0: f64, x1: f64, y1: f64| Aabb {
            min: Vec3::new(x0, y0, 0.0),
            max: Vec3::new(x1, y1, 2.2),
        };
        Self {
            anchors,
            waypoints: vec![
                Vec3::new(1.0, 1.0, 1.0),
                Vec3::new(9.0, 1.0, 1.0),
                Vec3::new(9.0, 3.0, 1.0),
                Vec3::new(1.0, 3.0, 1.0),
                Vec3::new(1.0, 5.0, 1.0),
                Vec3::new(9.0, 5.0, 1.0),
                Vec3::new(9.0, 7.0, 1.0),
                Vec3::new(1.0, 7.0, 1.0),
                Vec3::new(1.0, 9.0, 1.0),
                Vec3::new(13.5, 9.0, 1.0),
                Vec3::new(13.5, 1.0, 1.0),
                Vec3::new(17.0, 1.0, 1.0),
                Vec3::new(17.0, 9.0, 1.0),
                Vec3::new(20.5, 9.0, 1.0),
                Vec3::new(20.5, 1.0, 1.0),
                Vec3::new(24.0, 1.0, 1.0),
                Vec3::new(24.0, 9.0, 1.0),
                Vec3::new(16.0, 9.0, 1.0),
            ],
            speed: 0.5,
            sample_rate: 10.0,
            nlos_regions: vec![
                shelf(11.0, 1.5, 16.0, 4.2),
                shelf(11.0, 5.8, 16.0, 8.5),
                shelf(18.0, 1.5, 23.0, 4.2),
                shelf(18.0, 5.8, 23.0, 8.5),
            ],
            seed: 0,
            noise_sigma: 0.01,
            sync_jitter_ns: 0.3,
            nlos_excess_delay_mean_ns: 5.0,
            nlos_first_path_atten_db: 12.0,
            paths_per_link: 8,
            decay_const_ns: 15.0,
            pulse_width_taps: 2.0,
            t_s_ns: 1.0016,
            taps_len: 256,
            max_range_m: 14.0,
            los_reflection_cap: 0.7,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::default_deployment()
    }
}

/// Samples the constant-speed polyline walk at `sample_rate`, tagging samples
/// inside any obstructed region as warehouse.
pub fn generate_trajectory(cfg: &ScenarioConfig) -> Result<Vec<GroundTruthSample>, ConfigError> {
    if cfg.waypoints.len() < 2 {
        return Err(ConfigError("need at least 2 waypoints".into()));
    }
    let mut cumulative = vec![0.0f64];
    for pair in cfg.waypoints.windows(2) {
        let len = pair[1].sub(pair[0]).norm();
        cumulative.push(cumulative.last().unwrap() + len);
    }
    let total = *cumulative.last().unwrap();
    if total <= 0.0 {
        return Err(ConfigError("trajectory has zero length".into()));
    }
    let step = cfg.speed / cfg.sample_rate;
    let n = (total / step + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut segment = 0usize;
    for s in 0..n {
        let dist = (s as f64 * step).min(total);
        while segment + 2 < cumulative.len() && cumulative[segment + 1] < dist {
            segment += 1;
        }
        let seg_len = cumulative[segment + 1] - cumulative[segment];
        let t = if seg_len > 0.0 {
            (dist - cumulative[segment]) / seg_len
        } else {
            0.0
        };
        let a = cfg.waypoints[segment];
        let b = cfg.waypoints[segment + 1];
        let position = a.add(b.sub(a).scale(t));
        let zone_tag = if cfg.nlos_regions.iter().any(|r| r.contains(position)) {
            ZoneTag::Warehouse
        } else {
            ZoneTag::OpenSpace
        };
        out.push(GroundTruthSample {
            time_idx: s as TimeIdx,
            position,
            zone_tag,
        });
    }
    Ok(out)
}

fn exp_seconds(mean_ns: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean_ns <= 0.0 {
        return 0.0;
    }
    Exp::new(1.0 / mean_ns).unwrap().sample(rng) * 1e-9
}

/// Realizes the multipath channel of one link.
///
/// Line of sight: direct path of amplitude 1 at the true time of flight,
/// trailed by exponentially delayed reflections with exponentially decaying
/// Rayleigh-faded amplitudes whose sum is capped so the direct path stays
/// dominant. A link whose segment crosses an obstructed region instead gets
/// an attenuated direct path with extra delay and uncapped reflections, so
/// the strongest arrival typically comes later.
pub fn simulate_link(
    tag: Vec3,
    anchor: &AnchorNode,
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> LinkRealization {
    let true_tof = tag.distance(anchor.position) / SPEED_OF_LIGHT;
    let is_nlos = cfg
        .nlos_regions
        .iter()
        .any(|r| r.intersects_segment(tag, anchor.position));
    let (first_alpha, base_tau) = if is_nlos {
        let excess = exp_seconds(cfg.nlos_excess_delay_mean_ns, rng);
        let atten = 10f64.powf(-cfg.nlos_first_path_atten_db / 20.0);
        (atten, true_tof + excess)
    } else {
        (1.0, true_tof)
    };
    let mut paths = vec![PathComponent {
        alpha: first_alpha,
        tau: base_tau,
    }];

    // Rayleigh fading = Weibull with shape 2; scale 2/sqrt(pi) gives unit
    // mean amplitude.
    let rayleigh = Weibull::new(2.0 / core::f64::consts::PI.sqrt(), 2.0).unwrap();
    let decay_s = cfg.decay_const_ns * 1e-9;
    // On an obstructed link the surviving direct path takes the shortest
    // detour while reflections bounce off farther surfaces, so their cluster
    // starts a few pulse widths later and keeps full strength; on a clear
    // link reflections trail immediately with exponential power decay.
    let reflection_gap = if is_nlos {
        4.0 * cfg.pulse_width_taps * cfg.t_s_ns * 1e-9
    } else {
        0.0
    };
    let mut reflections = Vec::with_capacity(cfg.paths_per_link - 1);
    let mut amp_sum = 0.0;
    for _ in 1..cfg.paths_per_link {
        let delay = exp_seconds(cfg.decay_const_ns, rng);
        let fade = rayleigh.sample(rng);
        let alpha = if is_nlos {
            fade
        } else {
            (-delay / decay_s).exp() * fade
        };
        amp_sum += alpha;
        reflections.push(PathComponent {
            alpha,
            tau: base_tau + reflection_gap + delay,
        });
    }
    if !is_nlos && amp_sum > cfg.los_reflection_cap {
        let shrink = cfg.los_reflection_cap / amp_sum;
        for p in &mut reflections {
            p.alpha *= shrink;
        }
    }
    paths.extend(reflections);
    paths.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    LinkRealization {
        paths,
        is_nlos,
        true_tof,
    }
}

/// Renders a link into tap amplitudes with additive Gaussian noise and runs
/// first-path / peak-path detection.
///
/// Each arrival contributes a Gaussian pulse centred at its delay. The first
/// path is the earliest local maximum above six noise standard deviations
/// (falling back to the global peak if none qualifies); the peak path is the
/// global maximum.
pub fn render_cir(
    link: &LinkRealization,
    cfg: &ScenarioConfig,
    key: SourceKey,
    rng: &mut ChaCha8Rng,
) -> CirRecord {
    let l = cfg.taps_len;
    let t_s = cfg.t_s_ns * 1e-9;
    let w = cfg.pulse_width_taps;
    let mut taps = vec![0.0f64; l];
    for path in &link.paths {
        let centre = path.tau / t_s;
        let lo = ((centre - 6.0 * w).ceil().max(0.0)) as usize;
        let hi = ((centre + 6.0 * w).floor().min((l - 1) as f64)) as usize;
        for (j, tap) in taps.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let u = (j as f64 - centre) / w;
            *tap += path.alpha * (-0.5 * u * u).exp();
        }
    }
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma).unwrap();
        for tap in &mut taps {
            *tap = (tap.abs() + noise.sample(rng)).max(0.0);
        }
    } else {
        for tap in &mut taps {
            *tap = tap.abs();
        }
    }

    let threshold = 6.0 * cfg.noise_sigma;
    let mut pp = 0usize;
    for (j, v) in taps.iter().enumerate() {
        if *v > taps[pp] {
            pp = j;
        }
    }
    let mut fp = pp;
    for j in 0..l {
        if taps[j] > threshold && (j + 1 == l || taps[j] >= taps[j + 1]) {
            fp = j;
            break;
        }
    }
    CirRecord {
        time_idx: key.time_idx,
        anchor_id: key.anchor_id,
        taps,
        fp_idx: fp as f64,
        pp_idx: pp as f64,
        t_s,
    }
}

/// Receive time on the common synchronized clock: emission epoch plus the
/// earliest arrival's delay plus Gaussian synchronization jitter.
pub fn simulate_timestamps(
    link: &LinkRealization,
    cfg: &ScenarioConfig,
    emission_epoch: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let jitter = if cfg.sync_jitter_ns > 0.0 {
        Normal::new(0.0, cfg.sync_jitter_ns * 1e-9)
            .unwrap()
            .sample(rng)
    } else {
        0.0
    };
    emission_epoch + link.paths[0].tau + jitter
}

/// Generates the complete dataset for a scenario.
///
/// Per burst, the nearest in-range anchors record (at most
/// [`MAX_SIGNALS_PER_BURST`]); a burst seeing fewer than four is a
/// configuration error. Every record draws from a stream keyed by
/// `(time_idx, anchor_id)`, making the result independent of generation
/// order.
pub fn build_dataset(cfg: &ScenarioConfig) -> Result<Dataset, ConfigError> {
    cfg.validate()?;
    let ground_truth = generate_trajectory(cfg)?;
    let link_seed = derive_seed(cfg.seed, "link");

    let mut records = Vec::new();
    let mut timestamps = alloc::collections::BTreeMap::new();
    let mut nlos_labels = alloc::collections::BTreeMap::new();
    for sample in &ground_truth {
        let tag = sample.position;
        let mut in_range: Vec<(f64, AnchorId)> = cfg
            .anchors
            .iter()
            .map(|a| (tag.distance(a.position), a.anchor_id))
            .filter(|(d, _)| *d <= cfg.max_range_m)
            .collect();
        in_range.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if in_range.len() < 4 {
            return Err(ConfigError(format!(
                "only {} anchors in range at time_idx {}; need at least 4",
                in_range.len(),
                sample.time_idx
            )));
        }
        in_range.truncate(MAX_SIGNALS_PER_BURST);
        let mut selected: Vec<AnchorId> = in_range.into_iter().map(|(_, id)| id).collect();
        selected.sort_unstable();

        let emission_epoch = sample.time_idx as f64 / cfg.sample_rate;
        for anchor_id in selected {
            let anchor = cfg
                .anchors
                .iter()
                .find(|a| a.anchor_id == anchor_id)
                .expect("selected anchors come from the configured list");
            let key = SourceKey::new(sample.time_idx, anchor_id);
            let mut rng = ChaCha8Rng::seed_from_u64(link_seed);
            rng.set_stream(record_stream(sample.time_idx, anchor_id));
            let link = simulate_link(tag, anchor, cfg, &mut rng);
            let record = render_cir(&link, cfg, key, &mut rng);
            let rx = simulate_timestamps(&link, cfg, emission_epoch, &mut rng);
            records.push(record);
            timestamps.insert(key, rx);
            nlos_labels.insert(key, link.is_nlos);
        }
    }

    let ds = Dataset {
        anchors: cfg.anchors.clone(),
        records,
        timestamps,
        ground_truth,
        nlos_labels: Some(nlos_labels),
    };
    ds.validate()
        .map_err(|e| ConfigError(format!("generated dataset is invalid: {e}")))?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(id: AnchorId, x: f64, y: f64, z: f64) -> AnchorNode {
        AnchorNode {
            anchor_id: id,
            position: Vec3::new(x, y, z),
        }
    }

    /// Small all-line-of-sight scenario: four anchors around a 10 m square.
    fn square_scenario() -> ScenarioConfig {
        ScenarioConfig {
            anchors: vec![
                anchor(0, 0.0, 0.0, 2.5),
                anchor(1, 10.0, 0.0, 2.5),
                anchor(2, 0.0, 10.0, 2.5),
                anchor(3, 10.0, 10.0, 2.5),
            ],
            waypoints: vec![Vec3::new(2.0, 2.0, 1.0), Vec3::new(8.0, 6.0, 1.0)],
            speed: 1.0,
            sample_rate: 2.0,
            nlos_regions: Vec::new(),
            max_range_m: 20.0,
            ..ScenarioConfig::default_deployment()
        }
    }

    fn stream_rng(seed: u64, t: TimeIdx, a: AnchorId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "link"));
        rng.set_stream(record_stream(t, a));
        rng
    }

    #[test]
    fn straight_walk_samples_every_metre() {
        let cfg = ScenarioConfig {
            waypoints: vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(10.0, 0.0, 1.0)],
            speed: 1.0,
            sample_rate: 1.0,
            nlos_regions: Vec::new(),
            ..square_scenario()
        };
        let gt = generate_trajectory(&cfg).unwrap();
        assert_eq!(gt.len(), 11);
        for (i, s) in gt.iter().enumerate() {
            assert_eq!(s.time_idx, i as TimeIdx);
            assert!((s.position.x - i as f64).abs() < 1e-12);
            assert_eq!(s.position.y, 0.0);
            assert_eq!(s.zone_tag, ZoneTag::OpenSpace);
        }
    }

    #[test]
    fn sample_count_follows_path_length_speed_and_rate() {
        // 25 m at 0.5 m/s sampled at 2 Hz: 101 samples including both ends.
        let cfg = ScenarioConfig {
            waypoints: vec![
                Vec3::new(0.0, 0.0, 1.0),
                Vec3::new(10.0, 0.0, 1.0),
                Vec3::new(10.0, 15.0, 1.0),
            ],
            speed: 0.5,
            sample_rate: 2.0,
            ..square_scenario()
        };
        assert_eq!(generate_trajectory(&cfg).unwrap().len(), 101);
    }

    #[test]
    fn degenerate_trajectories_are_rejected() {
        let mut cfg = square_scenario();
        cfg.waypoints = vec![Vec3::new(1.0, 1.0, 1.0)];
        assert!(generate_trajectory(&cfg).is_err());
        cfg.waypoints = vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(1.0, 1.0, 1.0)];
        assert!(generate_trajectory(&cfg).is_err());
    }

    #[test]
    fn samples_inside_an_obstructed_region_are_tagged_warehouse() {
        let cfg = ScenarioConfig {
            waypoints: vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(10.0, 0.0, 1.0)],
            speed: 1.0,
            sample_rate: 1.0,
            nlos_regions: vec![Aabb {
                min: Vec3::new(4.0, -1.0, 0.0),
                max: Vec3::new(6.0, 1.0, 2.0),
            }],
            ..square_scenario()
        };
        let gt = generate_trajectory(&cfg).unwrap();
        for s in &gt {
            let expected = if (4.0..=6.0).contains(&s.position.x) {
                ZoneTag::Warehouse
            } else {
                ZoneTag::OpenSpace
            };
            assert_eq!(s.zone_tag, expected, "x = {}", s.position.x);
        }
    }

    #[test]
    fn line_of_sight_link_arrives_at_the_true_time_of_flight() {
        let cfg = square_scenario();
        let a = anchor(0, 3.0, 0.0, 1.0);
        let tag = Vec3::new(0.0, 0.0, 1.0);
        let mut rng = stream_rng(cfg.seed, 0, 0);
        let link = simulate_link(tag, &a, &cfg, &mut rng);
        assert!(!link.is_nlos);
        assert_eq!(link.paths.len(), cfg.paths_per_link);
        // 3 m of flight takes very nearly 10.007 ns.
        assert!((link.true_tof - 1.0006922855944561e-8).abs() < 1e-20);
        assert_eq!(link.paths[0].tau, link.true_tof);
        assert_eq!(link.paths[0].alpha, 1.0);
        for pair in link.paths.windows(2) {
            assert!(pair[0].tau <= pair[1].tau);
        }
        let reflected: f64 = link.paths[1..].iter().map(|p| p.alpha).sum();
        assert!(reflected <= cfg.los_reflection_cap + 1e-12);
    }

    #[test]
    fn blocked_link_is_delayed_and_attenuated() {
        let cfg = ScenarioConfig {
            nlos_regions: vec![Aabb {
                min: Vec3::new(4.0, -1.0, 0.0),
                max: Vec3::new(6.0, 1.0, 3.0),
            }],
            ..square_scenario()
        };
        let a = anchor(0, 10.0, 0.0, 1.0);
        let tag = Vec3::new(0.0, 0.0, 1.0);
        let mut rng = stream_rng(cfg.seed, 0, 0);
        let link = simulate_link(tag, &a, &cfg, &mut rng);
        assert!(link.is_nlos);
        assert!(link.paths[0].tau > link.true_tof);
        // 12 dB of attenuation scales the amplitude by 10^(-12/20).
        assert!((link.paths[0].alpha - 0.25118864315095796).abs() < 1e-15);
        for p in &link.paths[1..] {
            assert!(p.tau >= link.paths[0].tau);
        }
    }

    #[test]
    fn link_realizations_are_deterministic_per_stream() {
        let cfg = square_scenario();
        let a = anchor(2, 7.0, 1.0, 2.5);
        let tag = Vec3::new(1.0, 2.0, 1.0);
        let one = simulate_link(tag, &a, &cfg, &mut stream_rng(9, 4, 2));
        let two = simulate_link(tag, &a, &cfg, &mut stream_rng(9, 4, 2));
        let other_stream = simulate_link(tag, &a, &cfg, &mut stream_rng(9, 5, 2));
        assert_eq!(one, two);
        assert_ne!(one, other_stream);
    }

    #[test]
    fn noiseless_single_path_peaks_at_the_nearest_tap() {
        let cfg = ScenarioConfig {
            noise_sigma: 0.0,
            paths_per_link: 1,
            ..square_scenario()
        };
        // 37.3 tap delays: nearest tap is 37.
        let tau = 37.3 * cfg.t_s_ns * 1e-9;
        let link = LinkRealization {
            paths: vec![PathComponent { alpha: 1.0, tau }],
            is_nlos: false,
            true_tof: tau,
        };
        let mut rng = stream_rng(0, 0, 0);
        let rec = render_cir(&link, &cfg, SourceKey::new(0, 0), &mut rng);
        assert_eq!(rec.fp_idx, 37.0);
        assert_eq!(rec.pp_idx, 37.0);
        assert_eq!(rec.t_s, cfg.t_s_ns * 1e-9);
        assert!(rec.taps.iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn noiseless_line_of_sight_first_and_peak_paths_coincide() {
        let cfg = ScenarioConfig {
            noise_sigma: 0.0,
            ..square_scenario()
        };
        let tag = Vec3::new(2.0, 3.0, 1.0);
        for (t, id) in [(0u64, 0u32), (1, 1), (2, 2), (3, 3), (4, 0), (5, 1)] {
            let a = &cfg.anchors[(id as usize) % 4];
            let mut rng = stream_rng(cfg.seed, t, a.anchor_id);
            let link = simulate_link(tag, a, &cfg, &mut rng);
            let rec = render_cir(&link, &cfg, SourceKey::new(t, a.anchor_id), &mut rng);
            assert_eq!(
                rec.fp_idx, rec.pp_idx,
                "time {t} anchor {id}: fp {} vs pp {}",
                rec.fp_idx, rec.pp_idx
            );
        }
    }

    #[test]
    fn first_path_lands_near_the_true_first_arrival() {
        let cfg = square_scenario();
        let tag = Vec3::new(2.5, 4.0, 1.0);
        let mut worst: f64 = 0.0;
        for t in 0..1000u64 {
            let a = &cfg.anchors[(t % 4) as usize];
            let mut rng = stream_rng(17, t, a.anchor_id);
            let link = simulate_link(tag, a, &cfg, &mut rng);
            let rec = render_cir(&link, &cfg, SourceKey::new(t, a.anchor_id), &mut rng);
            let expected = link.paths[0].tau / (cfg.t_s_ns * 1e-9);
            worst = worst.max((rec.fp_idx - expected).abs());
        }
        assert!(worst <= 2.0, "worst first-path deviation {worst} taps");
    }

    #[test]
    fn obstructed_links_spread_peak_from_first_path() {
        let cfg = ScenarioConfig {
            nlos_regions: vec![Aabb {
                min: Vec3::new(3.0, -2.0, 0.0),
                max: Vec3::new(7.0, 12.0, 3.0),
            }],
            ..square_scenario()
        };
        let tag = Vec3::new(1.0, 5.0, 1.0);
        let far = anchor(9, 10.0, 5.0, 2.5);
        let mut spreads = Vec::new();
        for t in 0..200u64 {
            let mut rng = stream_rng(23, t, 9);
            let link = simulate_link(tag, &far, &cfg, &mut rng);
            assert!(link.is_nlos);
            let rec = render_cir(&link, &cfg, SourceKey::new(t, 9), &mut rng);
            spreads.push(rec.pp_idx - rec.fp_idx);
        }
        let mean = spreads.iter().sum::<f64>() / spreads.len() as f64;
        assert!(mean > 1.0, "mean spread {mean} taps");
        assert!(spreads.iter().filter(|s| **s > 0.0).count() > 120);
    }

    #[test]
    fn receive_times_are_exact_without_jitter() {
        let cfg = ScenarioConfig {
            sync_jitter_ns: 0.0,
            ..square_scenario()
        };
        let tag = Vec3::new(5.0, 5.0, 1.0);
        // All four square anchors are equidistant from the centre.
        let mut times = Vec::new();
        for a in &cfg.anchors {
            let mut rng = stream_rng(1, 0, a.anchor_id);
            let link = simulate_link(tag, a, &cfg, &mut rng);
            let rx = simulate_timestamps(&link, &cfg, 2.0, &mut rng);
            assert_eq!(rx, 2.0 + link.paths[0].tau);
            times.push(rx);
        }
        for t in &times {
            assert_eq!(*t, times[0]);
        }
    }

    #[test]
    fn jitter_magnitude_matches_its_configuration() {
        let cfg = square_scenario();
        let link = LinkRealization {
            paths: vec![PathComponent {
                alpha: 1.0,
                tau: 1e-8,
            }],
            is_nlos: false,
            true_tof: 1e-8,
        };
        let mut rng = stream_rng(3, 0, 0);
        let draws: Vec<f64> = (0..10000)
            .map(|_| simulate_timestamps(&link, &cfg, 0.0, &mut rng) - 1e-8)
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / draws.len() as f64;
        let std_ns = var.sqrt() * 1e9;
        assert!(
            (std_ns - cfg.sync_jitter_ns).abs() < 0.1 * cfg.sync_jitter_ns,
            "sample std {std_ns} ns"
        );
    }

    #[test]
    fn every_inrange_anchor_records_each_burst() {
        let cfg = ScenarioConfig {
            anchors: (0..8)
                .map(|i| {
                    anchor(
                        i,
                        5.0 * (i % 4) as f64,
                        10.0 * (i / 4) as f64,
                        2.5,
                    )
                })
                .collect(),
            waypoints: vec![Vec3::new(5.0, 4.0, 1.0), Vec3::new(9.0, 6.0, 1.0)],
            speed: 1.0,
            sample_rate: 2.0,
            nlos_regions: Vec::new(),
            max_range_m: 50.0,
            ..ScenarioConfig::default_deployment()
        };
        let ds = build_dataset(&cfg).unwrap();
        for t in 0..ds.ground_truth.len() as u64 {
            assert_eq!(ds.records.iter().filter(|r| r.time_idx == t).count(), 8);
        }
    }

    #[test]
    fn bursts_cap_at_nine_nearest_anchors() {
        let cfg = ScenarioConfig {
            anchors: (0..12)
                .map(|i| anchor(i, i as f64, 10.0 * ((i % 3) as f64 - 1.0), 2.5))
                .collect(),
            waypoints: vec![Vec3::new(5.0, 0.0, 1.0), Vec3::new(6.0, 0.0, 1.0)],
            speed: 1.0,
            sample_rate: 1.0,
            nlos_regions: Vec::new(),
            max_range_m: 100.0,
            ..ScenarioConfig::default_deployment()
        };
        let ds = build_dataset(&cfg).unwrap();
        let burst: Vec<&CirRecord> = ds.records.iter().filter(|r| r.time_idx == 0).collect();
        assert_eq!(burst.len(), MAX_SIGNALS_PER_BURST);
        // The nine nearest to (5, 0) at y = 0 or +-10: all four y = 0 anchors
        // rank first; the farthest anchors are dropped.
        let ids: Vec<AnchorId> = burst.iter().map(|r| r.anchor_id).collect();
        for y0 in [1u32, 4, 7, 10] {
            assert!(ids.contains(&y0), "expected y=0 anchor {y0} in {ids:?}");
        }
    }

    #[test]
    fn sparse_coverage_is_a_configuration_error() {
        let cfg = ScenarioConfig {
            max_range_m: 3.0,
            ..square_scenario()
        };
        let err = build_dataset(&cfg).unwrap_err();
        assert!(err.0.contains("anchors in range"), "{err}");
    }

    #[test]
    fn datasets_are_reproducible_and_valid() {
        let cfg = square_scenario();
        let a = build_dataset(&cfg).unwrap();
        let b = build_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
        assert!(a.nlos_labels.is_some());
        let different_seed = build_dataset(&ScenarioConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, different_seed);
    }

    #[test]
    fn records_inside_obstructions_are_labelled_nlos() {
        let cfg = ScenarioConfig {
            waypoints: vec![Vec3::new(2.0, 5.0, 1.0), Vec3::new(8.0, 5.0, 1.0)],
            speed: 1.0,
            sample_rate: 2.0,
            nlos_regions: vec![Aabb {
                min: Vec3::new(4.0, 3.0, 0.0),
                max: Vec3::new(6.0, 7.0, 2.0),
            }],
            ..square_scenario()
        };
        let ds = build_dataset(&cfg).unwrap();
        let labels = ds.nlos_labels.as_ref().unwrap();
        let mut inside = 0usize;
        let mut inside_nlos = 0usize;
        for gt in &ds.ground_truth {
            if cfg.nlos_regions[0].contains(gt.position) {
                for r in ds.records.iter().filter(|r| r.time_idx == gt.time_idx) {
                    inside += 1;
                    if labels[&r.key()] {
                        inside_nlos += 1;
                    }
                }
            }
        }
        assert!(inside > 0);
        assert!(
            inside_nlos as f64 >= 0.9 * inside as f64,
            "{inside_nlos} of {inside} records obstructed"
        );
    }

    #[test]
    fn obstructed_records_have_wider_first_to_peak_spread() {
        let cfg = ScenarioConfig {
            waypoints: vec![Vec3::new(1.0, 5.0, 1.0), Vec3::new(9.0, 5.0, 1.0)],
            speed: 0.5,
            sample_rate: 2.0,
            nlos_regions: vec![Aabb {
                min: Vec3::new(4.0, 2.0, 0.0),
                max: Vec3::new(6.0, 8.0, 2.2),
            }],
            ..square_scenario()
        };
        let ds = build_dataset(&cfg).unwrap();
        let labels = ds.nlos_labels.as_ref().unwrap();
        let (mut nlos_sum, mut nlos_n, mut los_sum, mut los_n) = (0.0, 0usize, 0.0, 0usize);
        for r in &ds.records {
            let spread = r.pp_idx - r.fp_idx;
            if labels[&r.key()] {
                nlos_sum += spread;
                nlos_n += 1;
            } else {
                los_sum += spread;
                los_n += 1;
            }
        }
        assert!(nlos_n > 0 && los_n > 0);
        let nlos_mean = nlos_sum / nlos_n as f64;
        let los_mean = los_sum / los_n as f64;
        assert!(
            nlos_mean > los_mean,
            "obstructed mean {nlos_mean} vs clear mean {los_mean}"
        );
    }

    #[test]
    fn reference_deployment_is_valid_and_two_zoned() {
        let cfg = ScenarioConfig::default_deployment();
        cfg.validate().unwrap();
        let gt = generate_trajectory(&cfg).unwrap();
        assert!(gt.len() >= 2000, "{} samples", gt.len());
        let warehouse = gt
            .iter()
            .filter(|s| s.zone_tag == ZoneTag::Warehouse)
            .count();
        let open = gt.len() - warehouse;
        assert!(warehouse > 0 && open > 0);
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let ok = square_scenario();
        assert!(ok.validate().is_ok());
        let cases: Vec<ScenarioConfig> = vec![
            ScenarioConfig {
                anchors: ok.anchors[..3].to_vec(),
                ..ok.clone()
            },
            ScenarioConfig {
                speed: 0.0,
                ..ok.clone()
            },
            ScenarioConfig {
                sample_rate: -1.0,
                ..ok.clone()
            },
            ScenarioConfig {
                noise_sigma: -0.1,
                ..ok.clone()
            },
            ScenarioConfig {
                paths_per_link: 0,
                ..ok.clone()
            },
            ScenarioConfig {
                taps_len: 8,
                ..ok.clone()
            },
            ScenarioConfig {
                los_reflection_cap: 1.0,
                ..ok.clone()
            },
            ScenarioConfig {
                pulse_width_taps: 0.0,
                ..ok.clone()
            },
        ];
        for bad in cases {
            assert!(bad.validate().is_err());
        }
    }
}
