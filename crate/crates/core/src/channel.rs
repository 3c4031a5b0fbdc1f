//! Saleh-Valenzuela multipath channels on a half-wavelength ULA.
//!
//! Each user's channel is a sum of `L` paths, each a complex gain times the
//! array steering vector at the path's AoD cosine. Large-scale gain follows
//! `(ref_dist / d)^path_loss_exp` with 0 dB at the reference distance.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::CVector;

/// Per-user channels together with the paths they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CVector>,
    pub path_gains: Vec<Vec<Complex64>>,
    pub path_aod_cos: Vec<Vec<f64>>,
    pub distances_m: Vec<f64>,
}

impl ChannelSet {
    /// Builds a set from explicit paths, assembling each `h_k`.
    pub fn from_paths(
        n_antennas: usize,
        path_gains: Vec<Vec<Complex64>>,
        path_aod_cos: Vec<Vec<f64>>,
        distances_m: Vec<f64>,
    ) -> Self {
        let h = path_gains
            .iter()
            .zip(&path_aod_cos)
            .map(|(g, t)| assemble(n_antennas, g, t))
            .collect();
        Self {
            h,
            path_gains,
            path_aod_cos,
            distances_m,
        }
    }

    /// Wraps raw channel vectors with no path decomposition, e.g. for
    /// synthetic test channels.
    pub fn from_vectors(h: Vec<CVector>) -> Self {
        let k = h.len();
        Self {
            h,
            path_gains: vec![Vec::new(); k],
            path_aod_cos: vec![Vec::new(); k],
            distances_m: vec![0.0; k],
        }
    }

    pub fn n_users(&self) -> usize {
        self.h.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.h.first().map_or(0, |h| h.len())
    }

    /// AoD cosine of the strongest path of user `k`.
    pub fn strongest_path_aod(&self, k: usize) -> Option<f64> {
        self.path_gains[k]
            .iter()
            .zip(&self.path_aod_cos[k])
            .max_by(|a, b| a.0.norm_sqr().total_cmp(&b.0.norm_sqr()))
            .map(|(_, t)| *t)
    }

    /// Writes one row per (user, path).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user", "path", "distance_m", "gain_re", "gain_im", "aod_cos"])?;
        for (k, (gains, aods)) in self.path_gains.iter().zip(&self.path_aod_cos).enumerate() {
            for (l, (g, t)) in gains.iter().zip(aods).enumerate() {
                w.write_record([
                    k.to_string(),
                    l.to_string(),
                    self.distances_m[k].to_string(),
                    g.re.to_string(),
                    g.im.to_string(),
                    t.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`ChannelSet::write_csv`]. Users and
    /// paths must appear in order.
    pub fn read_csv<R: Read>(input: R, n_antennas: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut gains: Vec<Vec<Complex64>> = Vec::new();
        let mut aods: Vec<Vec<f64>> = Vec::new();
        let mut dists = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec?;
            let bad = |reason: &str| Error::MalformedCsv {
                row,
                reason: reason.to_string(),
            };
            if rec.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let int = |j: usize| rec[j].parse::<usize>().map_err(|_| bad("bad integer"));
            let real = |j: usize| rec[j].parse::<f64>().map_err(|_| bad("bad number"));
            let (k, l) = (int(0)?, int(1)?);
            if k == gains.len() {
                gains.push(Vec::new());
                aods.push(Vec::new());
                dists.push(real(2)?);
            } else if k + 1 != gains.len() {
                return Err(bad("users out of order"));
            }
            if l != gains[k].len() {
                return Err(bad("paths out of order"));
            }
            gains[k].push(Complex64::new(real(3)?, real(4)?));
            aods[k].push(real(5)?);
        }
        Ok(Self::from_paths(n_antennas, gains, aods, dists))
    }
}

/// ULA response `[exp(j*pi*i*theta)]_{i=0..N-1}` for half-wavelength spacing.
pub fn steering_vector(n_antennas: usize, theta: f64) -> CVector {
    CVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|i| Complex64::cis(PI * i as f64 * theta)),
    )
}

fn assemble(n_antennas: usize, gains: &[Complex64], aods: &[f64]) -> CVector {
    let mut h = CVector::zeros(n_antennas);
    for (g, t) in gains.iter().zip(aods) {
        h.axpy(*g, &steering_vector(n_antennas, *t), Complex64::new(1.0, 0.0));
    }
    h
}

/// Expected power of each path for a user at `distance_m`.
pub fn path_powers(config: &SystemConfig, distance_m: f64) -> Vec<f64> {
    let l = config.n_paths;
    let large_scale = (config.ref_dist_m / distance_m).powf(config.path_loss_exp);
    if config.los {
        let backoff = 10f64.powf(-config.nlos_backoff_db / 10.0);
        let los = large_scale / (1.0 + (l as f64 - 1.0) * backoff);
        (0..l)
            .map(|i| if i == 0 { los } else { los * backoff })
            .collect()
    } else {
        vec![large_scale / (l as f64).sqrt(); l]
    }
}

fn cn<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws the paths of one user at a fixed distance.
pub fn draw_user_paths<R: Rng + ?Sized>(
    config: &SystemConfig,
    distance_m: f64,
    rng: &mut R,
) -> (Vec<Complex64>, Vec<f64>) {
    let powers = path_powers(config, distance_m);
    let mut gains = Vec::with_capacity(powers.len());
    let mut aods = Vec::with_capacity(powers.len());
    for p in powers {
        // 1 - U[0,1) lies in (-1, 1]
        aods.push(1.0 - 2.0 * rng.random::<f64>());
        gains.push(cn(rng, p));
    }
    (gains, aods)
}

/// Draws a full channel set: distances uniform over the cell annulus radius,
/// AoD cosines uniform, circularly-symmetric Gaussian path gains.
pub fn generate_channels<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> ChannelSet {
    let mut gains = Vec::with_capacity(config.n_users);
    let mut aods = Vec::with_capacity(config.n_users);
    let mut dists = Vec::with_capacity(config.n_users);
    for _ in 0..config.n_users {
        let d = rng.random_range(config.cell_min_m..=config.cell_max_m);
        let (g, t) = draw_user_paths(config, d, rng);
        gains.push(g);
        aods.push(t);
        dists.push(d);
    }
    ChannelSet::from_paths(config.n_antennas, gains, aods, dists)
}

/// Magnitude of the normalized correlation `h_i^H h_j / (|h_i| |h_j|)`.
pub fn correlation(hi: &CVector, hj: &CVector) -> Result<f64> {
    let (ni, nj) = (hi.norm(), hj.norm());
    if ni == 0.0 || nj == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((hi.dotc(hj).norm() / (ni * nj)).min(1.0))
}

/// Symmetric `K x K` correlation matrix with unit diagonal.
#[allow(clippy::needless_range_loop)]
pub fn correlation_matrix(channels: &ChannelSet) -> Result<Vec<Vec<f64>>> {
    let k = channels.n_users();
    let mut c = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let v = correlation(&channels.h[i], &channels.h[j])?;
            c[i][j] = v;
            c[j][i] = v;
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;
    use proptest::prelude::*;

    #[test]
    fn steering_examples() {
        let a = steering_vector(4, 0.0);
        assert!(a.iter().all(|z| (*z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let a = steering_vector(2, 1.0);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);

        // direct evaluation of exp(j*2*pi*i*0.5*theta) via cos/sin
        let a = steering_vector(8, 0.37);
        for i in 0..8 {
            let phase = 2.0 * PI * i as f64 * 0.5 * 0.37;
            let want = Complex64::new(phase.cos(), phase.sin());
            assert!((a[i] - want).norm() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_correlation() {
        // |sum_i exp(j*pi*i*d)| / N with d = 0.4, N = 8; closed form
        // |sin(N*pi*d/2) / sin(pi*d/2)| / N
        let n = 8;
        let d = 0.6 - 0.2;
        let closed = ((n as f64 * PI * d / 2.0).sin() / (PI * d / 2.0).sin()).abs() / n as f64;
        let mut brute = Complex64::new(0.0, 0.0);
        for i in 0..n {
            brute += Complex64::cis(PI * i as f64 * d);
        }
        let brute = brute.norm() / n as f64;
        assert!((closed - brute).abs() < 1e-12);
        let c = correlation(&steering_vector(n, 0.2), &steering_vector(n, 0.6)).unwrap();
        assert!((c - brute).abs() < 1e-12);
    }

    #[test]
    fn correlation_basics() {
        let h = steering_vector(16, 0.3) * Complex64::new(0.5, -2.0);
        assert!((correlation(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            correlation(&CVector::zeros(4), &steering_vector(4, 0.1)),
            Err(Error::ZeroNorm)
        ));
        // steering vectors decorrelate as N grows
        let small = correlation(&steering_vector(8, 0.1), &steering_vector(8, 0.33)).unwrap();
        let large = correlation(&steering_vector(1024, 0.1), &steering_vector(1024, 0.33)).unwrap();
        assert!(large < small);
        assert!(large < 0.01);
    }

    #[test]
    fn reference_distance_normalization() {
        let cfg = SystemConfig {
            n_antennas: 8,
            n_paths: 1,
            los: true,
            ..SystemConfig::default()
        };
        let mut rng = rng_stream(1, 0);
        let trials = 20_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let (g, t) = draw_user_paths(&cfg, cfg.ref_dist_m, &mut rng);
            let h = assemble(cfg.n_antennas, &g, &t);
            acc += h.norm_squared() / cfg.n_antennas as f64;
        }
        let mean = acc / trials as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean path power {mean}");
    }

    #[test]
    fn los_backoff_ratio() {
        let cfg = SystemConfig {
            los: true,
            n_paths: 4,
            ..SystemConfig::default()
        };
        let mut rng = rng_stream(2, 0);
        let (mut p1, mut p2) = (0.0, 0.0);
        for _ in 0..10_000 {
            let (g, _) = draw_user_paths(&cfg, 50.0, &mut rng);
            p1 += g[0].norm_sqr();
            p2 += g[1].norm_sqr();
        }
        let ratio_db = 10.0 * (p1 / p2).log10();
        assert!((ratio_db - 15.0).abs() < 0.3, "ratio {ratio_db} dB");
    }

    #[test]
    fn nlos_per_path_power() {
        let cfg = SystemConfig::default();
        let p = path_powers(&cfg, cfg.ref_dist_m);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn generation_is_deterministic_and_reconstructs() {
        let cfg = SystemConfig::default();
        let a = generate_channels(&cfg, &mut rng_stream(9, 0));
        let b = generate_channels(&cfg, &mut rng_stream(9, 0));
        assert_eq!(a, b);
        for k in 0..cfg.n_users {
            assert!((cfg.cell_min_m..=cfg.cell_max_m).contains(&a.distances_m[k]));
            assert!(a.path_aod_cos[k].iter().all(|t| *t > -1.0 && *t <= 1.0));
            let rebuilt = assemble(cfg.n_antennas, &a.path_gains[k], &a.path_aod_cos[k]);
            assert_eq!(rebuilt, a.h[k]);
        }
    }

    #[test]
    fn csv_round_trip() {
        let cfg = SystemConfig {
            n_antennas: 8,
            ..SystemConfig::default()
        };
        let set = generate_channels(&cfg, &mut rng_stream(3, 0));
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = ChannelSet::read_csv(buf.as_slice(), 8).unwrap();
        assert_eq!(back, set);

        let bad = "user,path,distance_m,gain_re,gain_im,aod_cos\n0,0,10,1,0,0.5\n0,2,10,1,0,0.5\n";
        match ChannelSet::read_csv(bad.as_bytes(), 8) {
            Err(Error::MalformedCsv { row, .. }) => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn steering_entries_unit_modulus(n in 1usize..128, theta in -0.999f64..1.0) {
            let a = steering_vector(n, theta);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn correlation_symmetric_and_scale_invariant(
            seed in any::<u64>(),
            re in -5.0f64..5.0,
            im in -5.0f64..5.0,
        ) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let cfg = SystemConfig { n_antennas: 16, n_users: 3, rate_floors: vec![1.0; 3], ..SystemConfig::default() };
            let set = generate_channels(&cfg, &mut rng_stream(seed, 0));
            let c = Complex64::new(re, im);
            let (hi, hj) = (&set.h[0], &set.h[1]);
            let cij = correlation(hi, hj).unwrap();
            prop_assert!((cij - correlation(hj, hi).unwrap()).abs() < 1e-12);
            prop_assert!((cij - correlation(&(hi * c), hj).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&cij));
        }
    }
}
