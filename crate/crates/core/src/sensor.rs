//! Forward model of a 4x4-zone SPAD time-of-flight sensor.
//!
//! A rendered high-resolution scene (radial distance + reflectivity per ray) is integrated
//! into one photon-count histogram per sensor zone. Each ray contributes an inverse-square
//! weighted Gaussian pulse centred on its round-trip arrival time, a constant ambient level
//! is added to every bin, and counts are drawn from independent Poisson distributions.
//! The raw histogram is then cropped to the first `n_bins_crop` bins.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::map::Map;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Depth reported for zones without a usable return.
pub const NO_RETURN_DEPTH: f32 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub grid_x: usize,
    pub grid_y: usize,
    pub n_bins_raw: usize,
    pub n_bins_crop: usize,
    /// Bin width in picoseconds.
    pub bin_duration_ps: f64,
    pub fov_diagonal_deg: f64,
    pub max_range_m: f64,
    /// Full width at half maximum of the instrument response, in bins.
    pub pulse_fwhm_bins: f64,
    /// Expected signal photons per zone for a fully covered unit-reflectivity target at 1 m.
    pub signal_photons: f64,
    /// Expected ambient counts per bin per zone.
    pub ambient_rate: f64,
    pub rng_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            grid_x: 4,
            grid_y: 4,
            n_bins_raw: 144,
            n_bins_crop: 100,
            bin_duration_ps: 125.0,
            fov_diagonal_deg: 60.0,
            max_range_m: 3.0,
            pulse_fwhm_bins: 2.0,
            signal_photons: 200.0,
            ambient_rate: 0.5,
            rng_seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("sensor: {msg}")));
        if self.grid_x == 0 || self.grid_y == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.n_bins_crop == 0 || self.n_bins_crop > self.n_bins_raw {
            return bad("need 0 < n_bins_crop <= n_bins_raw");
        }
        if !(self.bin_duration_ps > 0.0) {
            return bad("bin_duration must be positive");
        }
        if !(self.fov_diagonal_deg > 0.0 && self.fov_diagonal_deg < 180.0) {
            return bad("fov_diagonal must lie in (0, 180) degrees");
        }
        if !(self.pulse_fwhm_bins > 0.0) {
            return bad("pulse_fwhm must be positive");
        }
        if !(self.signal_photons >= 0.0) || !(self.ambient_rate >= 0.0) {
            return bad("photon rates must be non-negative");
        }
        if !(self.max_range_m > 0.0) {
            return bad("max_range must be positive");
        }
        Ok(())
    }

    /// Depth spanned by one time bin, `c * bin_duration / 2`, in meters.
    pub fn bin_depth(&self) -> f64 {
        SPEED_OF_LIGHT * self.bin_duration_ps * 1e-12 / 2.0
    }

    /// Largest depth representable after cropping.
    pub fn crop_range(&self) -> f64 {
        self.n_bins_crop as f64 * self.bin_depth()
    }

    pub fn zones(&self) -> usize {
        self.grid_x * self.grid_y
    }

    /// Default noise floor for [`max_return_depth`]: `ceil(3 * ambient_rate)`.
    pub fn noise_floor(&self) -> u32 {
        (3.0 * self.ambient_rate).ceil() as u32
    }
}

/// Photon counts per zone and time bin. Zone `(col, row)` occupies
/// `counts[(row * grid_x + col) * n_bins ..][..n_bins]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub grid_x: usize,
    pub grid_y: usize,
    pub n_bins: usize,
    pub counts: Vec<u16>,
}

impl Histogram {
    pub fn zeros(grid_x: usize, grid_y: usize, n_bins: usize) -> Self {
        Histogram {
            grid_x,
            grid_y,
            n_bins,
            counts: vec![0; grid_x * grid_y * n_bins],
        }
    }

    pub fn zone(&self, col: usize, row: usize) -> &[u16] {
        let start = (row * self.grid_x + col) * self.n_bins;
        &self.counts[start..start + self.n_bins]
    }

    pub fn zone_mut(&mut self, col: usize, row: usize) -> &mut [u16] {
        let start = (row * self.grid_x + col) * self.n_bins;
        &mut self.counts[start..start + self.n_bins]
    }

    pub fn max_count(&self) -> u16 {
        self.counts.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxReturnDepthMap {
    pub grid_x: usize,
    pub grid_y: usize,
    /// Meters, row-major; [`NO_RETURN_DEPTH`] where `valid` is false.
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
}

/// Center depth of a cropped time bin.
pub fn bin_to_depth(bin_index: usize, cfg: &SensorConfig) -> Result<f64> {
    if bin_index >= cfg.n_bins_crop {
        return Err(Error::Domain(format!(
            "bin index {bin_index} outside 0..{}",
            cfg.n_bins_crop
        )));
    }
    Ok((bin_index as f64 + 0.5) * cfg.bin_depth())
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Adds the truncated, bin-integrated Gaussian pulse arriving at `t` (in bins) with total
/// mass `weight` into `bins`.
fn deposit_pulse(bins: &mut [f64], t: f64, sigma: f64, weight: f64) {
    if !t.is_finite() || t < 0.0 {
        return;
    }
    let n = bins.len() as f64;
    if sigma < 1e-9 {
        if t < n {
            bins[t as usize] += weight;
        }
        return;
    }
    let lo = t - 3.0 * sigma;
    let hi = t + 3.0 * sigma;
    let norm = std_normal_cdf(3.0) - std_normal_cdf(-3.0);
    let first = lo.floor().max(0.0);
    if first >= n {
        return;
    }
    let last = hi.floor().min(n - 1.0);
    let mut b = first;
    let mut prev = std_normal_cdf((b.max(lo) - t) / sigma);
    while b <= last {
        let edge = (b + 1.0).min(hi);
        let cur = std_normal_cdf((edge - t) / sigma);
        bins[b as usize] += weight * (cur - prev) / norm;
        prev = cur;
        b += 1.0;
    }
}

fn check_scene_maps(radial: &Map, reflectivity: &Map, cfg: &SensorConfig) -> Result<()> {
    if radial.width != reflectivity.width || radial.height != reflectivity.height {
        return Err(Error::Shape(format!(
            "radial map {}x{} vs reflectivity map {}x{}",
            radial.width, radial.height, reflectivity.width, reflectivity.height
        )));
    }
    if radial.width == 0
        || radial.height == 0
        || !radial.width.is_multiple_of(cfg.grid_x)
        || !radial.height.is_multiple_of(cfg.grid_y)
    {
        return Err(Error::Shape(format!(
            "scene resolution {}x{} is not a multiple of the {}x{} zone grid",
            radial.width, radial.height, cfg.grid_x, cfg.grid_y
        )));
    }
    Ok(())
}

/// Expected counts per zone and raw bin (`zones * n_bins_raw`, zone-major) before Poisson
/// sampling. Non-finite or non-positive radial distances are treated as no hit.
pub fn expected_counts(radial: &Map, reflectivity: &Map, cfg: &SensorConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_scene_maps(radial, reflectivity, cfg)?;
    let block_w = radial.width / cfg.grid_x;
    let block_h = radial.height / cfg.grid_y;
    let per_ray = cfg.signal_photons / (block_w * block_h) as f64;
    let bin_depth = cfg.bin_depth();
    let sigma = cfg.pulse_fwhm_bins / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());

    let mut lambda = vec![cfg.ambient_rate; cfg.zones() * cfg.n_bins_raw];
    for zone_row in 0..cfg.grid_y {
        for zone_col in 0..cfg.grid_x {
            let zone = zone_row * cfg.grid_x + zone_col;
            let mut signal = vec![0.0f64; cfg.n_bins_raw];
            for row in zone_row * block_h..(zone_row + 1) * block_h {
                for col in zone_col * block_w..(zone_col + 1) * block_w {
                    let r = radial.get(col, row) as f64;
                    if !(r.is_finite() && r > 0.0) {
                        continue;
                    }
                    let refl = reflectivity.get(col, row) as f64;
                    let weight = refl * per_ray / (r * r);
                    deposit_pulse(&mut signal, r / bin_depth, sigma, weight);
                }
            }
            let out = &mut lambda[zone * cfg.n_bins_raw..(zone + 1) * cfg.n_bins_raw];
            for (l, s) in out.iter_mut().zip(&signal) {
                *l += s;
            }
        }
    }
    Ok(lambda)
}

/// Draws Poisson counts for a full-length (`n_bins_raw`) histogram.
///
/// Each zone samples from its own ChaCha stream keyed off one draw from `rng`, in bin
/// order, so cropping the result equals simulating with `n_bins_raw = n_bins_crop`.
pub fn sample_counts<R: Rng + ?Sized>(
    lambda: &[f64],
    cfg: &SensorConfig,
    rng: &mut R,
) -> Result<Histogram> {
    if lambda.len() != cfg.zones() * cfg.n_bins_raw {
        return Err(Error::Shape(format!(
            "expected {} rates, got {}",
            cfg.zones() * cfg.n_bins_raw,
            lambda.len()
        )));
    }
    let key: [u8; 32] = rng.random();
    let mut out = Histogram::zeros(cfg.grid_x, cfg.grid_y, cfg.n_bins_raw);
    for zone in 0..cfg.zones() {
        let mut zone_rng = ChaCha8Rng::from_seed(key);
        zone_rng.set_stream(zone as u64);
        let rates = &lambda[zone * cfg.n_bins_raw..(zone + 1) * cfg.n_bins_raw];
        let counts = &mut out.counts[zone * cfg.n_bins_raw..(zone + 1) * cfg.n_bins_raw];
        for (c, &l) in counts.iter_mut().zip(rates) {
            *c = if l > 0.0 {
                let draw: f64 = Poisson::new(l)
                    .map_err(|e| Error::Numeric(format!("poisson rate {l}: {e}")))?
                    .sample(&mut zone_rng);
                draw.min(u16::MAX as f64) as u16
            } else {
                0
            };
        }
    }
    Ok(out)
}

/// Simulates the cropped sensor histogram for a rendered scene.
pub fn simulate_histogram<R: Rng + ?Sized>(
    hr_radial: &Map,
    hr_reflectivity: &Map,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Result<Histogram> {
    let lambda = expected_counts(hr_radial, hr_reflectivity, cfg)?;
    let raw = sample_counts(&lambda, cfg, rng)?;
    crop_histogram(&raw, cfg)
}

/// Keeps the first `n_bins_crop` bins of every zone.
pub fn crop_histogram(raw: &Histogram, cfg: &SensorConfig) -> Result<Histogram> {
    if raw.grid_x != cfg.grid_x || raw.grid_y != cfg.grid_y {
        return Err(Error::Shape(format!(
            "raw histogram grid {}x{} does not match config {}x{}",
            raw.grid_x, raw.grid_y, cfg.grid_x, cfg.grid_y
        )));
    }
    if raw.n_bins < cfg.n_bins_crop {
        return Err(Error::Shape(format!(
            "raw histogram has {} bins, fewer than the {} kept",
            raw.n_bins, cfg.n_bins_crop
        )));
    }
    let mut out = Histogram::zeros(cfg.grid_x, cfg.grid_y, cfg.n_bins_crop);
    for zone in 0..cfg.zones() {
        let src = &raw.counts[zone * raw.n_bins..zone * raw.n_bins + cfg.n_bins_crop];
        out.counts[zone * cfg.n_bins_crop..(zone + 1) * cfg.n_bins_crop].copy_from_slice(src);
    }
    Ok(out)
}

/// Classical baseline: per zone, the depth of the bin with the most photons.
pub fn max_return_depth(h: &Histogram, cfg: &SensorConfig) -> Result<MaxReturnDepthMap> {
    max_return_depth_with_floor(h, cfg, cfg.noise_floor())
}

/// As [`max_return_depth`] with an explicit noise floor; zones whose peak count is at or
/// below `noise_floor` are invalid. Ties resolve to the smaller bin.
pub fn max_return_depth_with_floor(
    h: &Histogram,
    cfg: &SensorConfig,
    noise_floor: u32,
) -> Result<MaxReturnDepthMap> {
    if h.grid_x != cfg.grid_x || h.grid_y != cfg.grid_y || h.n_bins != cfg.n_bins_crop {
        return Err(Error::Shape(format!(
            "histogram {}x{}x{} does not match config {}x{}x{}",
            h.grid_x, h.grid_y, h.n_bins, cfg.grid_x, cfg.grid_y, cfg.n_bins_crop
        )));
    }
    let zones = cfg.zones();
    let mut depth = vec![NO_RETURN_DEPTH; zones];
    let mut valid = vec![false; zones];
    for zone in 0..zones {
        let counts = &h.counts[zone * h.n_bins..(zone + 1) * h.n_bins];
        let (best_bin, best) =
            counts.iter().enumerate().fold(
                (0, 0u16),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        if u32::from(best) > noise_floor {
            depth[zone] = bin_to_depth(best_bin, cfg)? as f32;
            valid[zone] = true;
        }
    }
    Ok(MaxReturnDepthMap {
        grid_x: cfg.grid_x,
        grid_y: cfg.grid_y,
        depth,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_scene(radial: f32, n: usize) -> (Map, Map) {
        (Map::filled(n, n, radial), Map::filled(n, n, 1.0))
    }

    #[test]
    fn bin_centres_match_hand_values() {
        let cfg = SensorConfig::default();
        assert!((cfg.bin_depth() - 0.018737).abs() < 1e-6);
        assert!((bin_to_depth(0, &cfg).unwrap() - 0.009369).abs() < 1e-6);
        assert!((bin_to_depth(39, &cfg).unwrap() - 0.74011).abs() < 1e-5);
        assert!((bin_to_depth(99, &cfg).unwrap() - 1.8643).abs() < 1e-4);
        assert!(matches!(bin_to_depth(100, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn narrow_pulse_lands_in_floor_bin() {
        let cfg = SensorConfig {
            ambient_rate: 0.0,
            pulse_fwhm_bins: 1e-6,
            ..SensorConfig::default()
        };
        let (r, refl) = flat_scene(0.75, 16);
        let lambda = expected_counts(&r, &refl, &cfg).unwrap();
        for zone in 0..cfg.zones() {
            let rates = &lambda[zone * 144..(zone + 1) * 144];
            let total: f64 = rates.iter().sum();
            assert!((rates[40] - total).abs() < 1e-9, "zone {zone}");
        }
    }

    #[test]
    fn empty_scene_without_ambient_is_all_zero() {
        let cfg = SensorConfig {
            ambient_rate: 0.0,
            ..SensorConfig::default()
        };
        let (r, refl) = flat_scene(f32::INFINITY, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = simulate_histogram(&r, &refl, &cfg, &mut rng).unwrap();
        assert_eq!(h.counts.len(), 16 * 100);
        assert!(h.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = SensorConfig::default();
        let (r, refl) = flat_scene(1.2, 16);
        let a = simulate_histogram(&r, &refl, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = simulate_histogram(&r, &refl, &cfg, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_maps_are_shape_errors() {
        let cfg = SensorConfig::default();
        let r = Map::filled(16, 16, 1.0);
        let refl = Map::filled(8, 8, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simulate_histogram(&r, &refl, &cfg, &mut rng),
            Err(Error::Shape(_))
        ));
        let r = Map::filled(10, 10, 1.0);
        assert!(matches!(
            simulate_histogram(&r, &r, &cfg, &mut rng),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn crop_keeps_boundary_and_drops_tail() {
        let cfg = SensorConfig::default();
        let mut raw = Histogram::zeros(4, 4, 144);
        raw.zone_mut(0, 0)[120] = 9;
        raw.zone_mut(1, 2)[99] = 4;
        let h = crop_histogram(&raw, &cfg).unwrap();
        assert_eq!(h.n_bins, 100);
        assert_eq!(h.zone(1, 2)[99], 4);
        assert_eq!(h.counts.iter().map(|&c| c as u32).sum::<u32>(), 4);

        let zero = crop_histogram(&Histogram::zeros(4, 4, 144), &cfg).unwrap();
        assert!(zero.counts.iter().all(|&c| c == 0));

        let short = Histogram::zeros(4, 4, 50);
        assert!(matches!(crop_histogram(&short, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn max_return_examples() {
        let cfg = SensorConfig::default();
        let mut h = Histogram::zeros(4, 4, 100);
        h.zone_mut(0, 0)[39] = 5;
        h.zone_mut(1, 0)[10] = 7;
        h.zone_mut(1, 0)[20] = 7;
        let m = max_return_depth(&h, &cfg).unwrap();
        assert!(m.valid[0]);
        assert!((m.depth[0] - 0.74011).abs() < 1e-5);
        assert!(m.valid[1]);
        assert!((m.depth[1] as f64 - bin_to_depth(10, &cfg).unwrap()).abs() < 1e-6);
        assert!(!m.valid[2]);
        assert_eq!(m.depth[2], NO_RETURN_DEPTH);
    }

    #[test]
    fn doubling_signal_doubles_signal_rates() {
        let base = SensorConfig::default();
        let doubled = SensorConfig {
            signal_photons: 2.0 * base.signal_photons,
            ..base.clone()
        };
        let (r, refl) = flat_scene(0.9, 16);
        let a = expected_counts(&r, &refl, &base).unwrap();
        let b = expected_counts(&r, &refl, &doubled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            let sa = x - base.ambient_rate;
            let sb = y - base.ambient_rate;
            assert!((sb - 2.0 * sa).abs() <= 1e-12 * sb.abs().max(1.0));
        }
    }

    #[test]
    fn cropping_matches_direct_short_simulation() {
        let long = SensorConfig::default();
        let short = SensorConfig {
            n_bins_raw: 100,
            ..long.clone()
        };
        let (r, refl) = flat_scene(1.1, 16);
        let a = simulate_histogram(&r, &refl, &long, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = simulate_histogram(&r, &refl, &short, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
