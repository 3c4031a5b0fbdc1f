//! Hybrid beamformer design.
//!
//! For a fixed analog matrix `A` the digital precoder is the approximate
//! zero-forcing solution `(H~^H A)^+` against each group's strongest user
//! (by pre-beamforming channel norm), with columns scaled so that every
//! hybrid beam `w_m = A d_m` has unit norm. The analog matrix itself is
//! searched by a boundary-compressed particle swarm: particles move inside
//! the disk `|a| <= 1/sqrt(N)` while an inner boundary grows from zero to
//! `1/sqrt(N)`, so the swarm ends on the constant-modulus circle.
//!
//! Each fitness evaluation runs the full chain: AZF digital precoder,
//! SIC re-ordering, inter/intra-group power allocation, sum rate.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::config::{PsoConfig, SystemConfig};
use crate::grouping::Grouping;
use crate::linalg::{pinv, CMatrix};
use crate::metrics::{rate_report, Architecture, RateReport};
use crate::power::{gains_from_projection, inter_gpa, stacked_adjoint, EffectiveGains, PowerAllocation};
use crate::rng::{particle_stream_id, rng_stream, Stream};

/// Fitness of a candidate whose power allocation is infeasible.
pub const INFEASIBLE_FITNESS: f64 = -1.0e6;
/// Fitness of a candidate whose precoder has a zero-norm column.
pub const DEGENERATE_FITNESS: f64 = f64::NEG_INFINITY;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridBeamformer {
    /// `N x M` analog matrix.
    pub a: CMatrix,
    /// `M x M` digital matrix.
    pub d: CMatrix,
    /// `A * D`, unit-norm columns.
    pub w: CMatrix,
}

impl HybridBeamformer {
    /// `max | |A_ij| sqrt(N) - 1 |`.
    pub fn cm_violation(&self) -> f64 {
        let scale = (self.a.nrows() as f64).sqrt();
        self.a
            .iter()
            .map(|z| (z.norm() * scale - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max | ||w_m|| - 1 |`.
    pub fn column_norm_error(&self) -> f64 {
        self.w
            .column_iter()
            .map(|c| (c.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Strongest user of each group by `||h_k||`; ties go to the lowest id.
pub fn azf_users(channels: &ChannelSet, grouping: &Grouping) -> Vec<usize> {
    grouping
        .groups
        .iter()
        .map(|g| {
            let mut best = g[0];
            for &k in &g[1..] {
                if channels.h[k].norm_squared() > channels.h[best].norm_squared() {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn azf_from_adjoint(a: &CMatrix, h_tilde_adj: &CMatrix) -> Option<HybridBeamformer> {
    let raw = pinv(&(h_tilde_adj * a));
    let mut w = a * &raw;
    let mut d = raw;
    for m in 0..w.ncols() {
        let norm = w.column(m).norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        let inv = Complex64::new(1.0 / norm, 0.0);
        w.column_mut(m).scale_mut(1.0 / norm);
        d.column_mut(m).iter_mut().for_each(|z| *z *= inv);
    }
    Some(HybridBeamformer { a: a.clone(), d, w })
}

/// AZF digital precoder for analog matrix `a`. `None` when some hybrid beam
/// has zero norm.
pub fn azf_digital(a: &CMatrix, channels: &ChannelSet, grouping: &Grouping) -> Option<HybridBeamformer> {
    let users = azf_users(channels, grouping);
    let h_tilde_adj = CMatrix::from_fn(users.len(), channels.n_antennas(), |r, c| {
        channels.h[users[r]][c].conj()
    });
    azf_from_adjoint(a, &h_tilde_adj)
}

/// How inter-group interference is treated by the fitness chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessMode {
    Designed,
    /// Cross-beam gains forced to zero in both allocation and rates.
    Ideal,
}

/// Result of one fitness evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub feasible: bool,
    /// `max_{m != i} |h_{m,1}^H w_i| / ||h_{m,1}||` over AZF users.
    pub azf_residual: f64,
}

/// Everything a fitness evaluation needs besides the analog matrix.
pub struct FitnessContext<'a> {
    pub channels: &'a ChannelSet,
    pub grouping: &'a Grouping,
    pub config: &'a SystemConfig,
    pub mode: FitnessMode,
    h_adj: CMatrix,
    h_tilde_adj: CMatrix,
    azf_users: Vec<usize>,
    azf_norms: Vec<f64>,
}

/// Full evaluation of one analog matrix.
#[derive(Debug, Clone)]
pub struct Design {
    pub beamformer: HybridBeamformer,
    pub gains: EffectiveGains,
    pub allocation: PowerAllocation,
    pub report: RateReport,
    pub azf_residual: f64,
}

impl<'a> FitnessContext<'a> {
    pub fn new(
        channels: &'a ChannelSet,
        grouping: &'a Grouping,
        config: &'a SystemConfig,
        mode: FitnessMode,
    ) -> Self {
        let azf_users = azf_users(channels, grouping);
        let h_adj = stacked_adjoint(channels);
        let h_tilde_adj = CMatrix::from_fn(azf_users.len(), channels.n_antennas(), |r, c| {
            h_adj[(azf_users[r], c)]
        });
        let azf_norms = azf_users.iter().map(|&k| channels.h[k].norm()).collect();
        Self {
            channels,
            grouping,
            config,
            mode,
            h_adj,
            h_tilde_adj,
            azf_users,
            azf_norms,
        }
    }

    /// Runs the whole chain for `a`. `None` for degenerate precoders.
    pub fn design(&self, a: &CMatrix) -> Option<Design> {
        let beamformer = azf_from_adjoint(a, &self.h_tilde_adj)?;
        let proj = &self.h_adj * &beamformer.w;
        let mut azf_residual: f64 = 0.0;
        for (m, &k) in self.azf_users.iter().enumerate() {
            for i in 0..proj.ncols() {
                if i != m {
                    azf_residual = azf_residual.max(proj[(k, i)].norm() / self.azf_norms[m]);
                }
            }
        }
        let mut gains = gains_from_projection(self.grouping, &proj);
        if self.mode == FitnessMode::Ideal {
            gains = gains.without_inter_group();
        }
        let eta = gains.eta(&self.config.rate_floors);
        let allocation = inter_gpa(
            &gains,
            &eta,
            self.config.total_power,
            self.config.noise_power,
            self.config.f_max,
        );
        let report = rate_report(&gains, &allocation, self.config, Architecture::Hybrid);
        Some(Design {
            beamformer,
            gains,
            allocation,
            report,
            azf_residual,
        })
    }

    pub fn evaluate(&self, a: &CMatrix) -> Evaluation {
        match self.design(a) {
            None => Evaluation {
                fitness: DEGENERATE_FITNESS,
                feasible: false,
                azf_residual: f64::NAN,
            },
            Some(d) => Evaluation {
                fitness: if d.report.feasible {
                    d.report.asr
                } else {
                    INFEASIBLE_FITNESS
                },
                feasible: d.report.feasible,
                azf_residual: d.azf_residual,
            },
        }
    }
}

/// Sum rate of analog candidate `a`, or a sentinel when infeasible.
pub fn fitness(a: &CMatrix, channels: &ChannelSet, grouping: &Grouping, config: &SystemConfig) -> f64 {
    FitnessContext::new(channels, grouping, config, FitnessMode::Designed)
        .evaluate(a)
        .fitness
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: CMatrix,
    pub velocity: CMatrix,
    pub best: CMatrix,
    pub best_fitness: f64,
    rng: Stream,
}

/// Swarm state between iterations.
#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub g_best: CMatrix,
    pub g_best_fitness: f64,
    pub inertia: f64,
    pub d_in: f64,
    pub d_out: f64,
    /// Largest AZF residual over every evaluated candidate.
    pub max_azf_residual: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub g_best_fitness: f64,
    pub mean_fitness: f64,
    pub d_in: f64,
}

fn project_radial(z: &mut Complex64, lo: f64, hi: f64) {
    let r = z.norm();
    if r > hi {
        *z *= hi / r;
    } else if r < lo {
        *z = if r > 0.0 {
            *z * (lo / r)
        } else {
            Complex64::new(lo, 0.0)
        };
    }
}

fn merge_residual(acc: f64, e: &Evaluation) -> f64 {
    if e.azf_residual.is_nan() {
        acc
    } else {
        acc.max(e.azf_residual)
    }
}

impl Swarm {
    /// Particles start on the outer boundary with uniform random phases and
    /// zero velocity; each owns the stream `(seed, particle id)`.
    pub fn init(ctx: &FitnessContext<'_>, pso: &PsoConfig, seed: u64) -> Self {
        let n = ctx.channels.n_antennas();
        let m = ctx.grouping.n_groups();
        let d_out = 1.0 / (n as f64).sqrt();
        let particles: Vec<(Particle, Evaluation)> = (0..pso.n_particles)
            .into_par_iter()
            .map(|l| {
                let mut rng = rng_stream(seed, particle_stream_id(l));
                let position = CMatrix::from_fn(n, m, |_, _| {
                    Complex64::from_polar(d_out, std::f64::consts::TAU * rng.random::<f64>())
                });
                let eval = ctx.evaluate(&position);
                (
                    Particle {
                        velocity: CMatrix::zeros(n, m),
                        best: position.clone(),
                        position,
                        best_fitness: eval.fitness,
                        rng,
                    },
                    eval,
                )
            })
            .collect();
        let max_azf_residual = particles.iter().fold(0.0, |acc, (_, e)| merge_residual(acc, e));
        let particles: Vec<Particle> = particles.into_iter().map(|(p, _)| p).collect();
        let lead = best_index(&particles);
        Self {
            g_best: particles[lead].best.clone(),
            g_best_fitness: particles[lead].best_fitness,
            evaluations: particles.len(),
            particles,
            inertia: 0.0,
            d_in: 0.0,
            d_out,
            max_azf_residual,
        }
    }

    pub fn mean_best_fitness(&self) -> f64 {
        let finite: Vec<f64> = self
            .particles
            .iter()
            .map(|p| p.best_fitness)
            .filter(|f| f.is_finite())
            .collect();
        if finite.is_empty() {
            f64::NEG_INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        }
    }
}

fn best_index(particles: &[Particle]) -> usize {
    let mut best = 0;
    for (l, p) in particles.iter().enumerate().skip(1) {
        if p.best_fitness > particles[best].best_fitness {
            best = l;
        }
    }
    best
}

/// One swarm iteration `t` in `1..=T_max`. Returns the mean fitness of the
/// freshly evaluated positions.
pub fn pso_step(swarm: &mut Swarm, t: usize, ctx: &FitnessContext<'_>, pso: &PsoConfig) -> f64 {
    let frac = t as f64 / pso.n_iterations as f64;
    let omega = pso.omega_max - frac * (pso.omega_max - pso.omega_min);
    let d_out = swarm.d_out;
    let d_in = frac * d_out;
    swarm.inertia = omega;
    swarm.d_in = d_in;
    let g_best = &swarm.g_best;
    let (c1, c2, split) = (pso.c1, pso.c2, pso.split_component_draws);

    let evals: Vec<Evaluation> = swarm
        .particles
        .par_iter_mut()
        .map(|p| {
            let pos = p.position.as_mut_slice();
            let vel = p.velocity.as_mut_slice();
            let best = p.best.as_mut_slice();
            let gb = g_best.as_slice();
            for e in 0..pos.len() {
                let to_best = best[e] - pos[e];
                let to_global = gb[e] - pos[e];
                let (pull_best, pull_global) = if split {
                    let (a, b, c, d): (f64, f64, f64, f64) =
                        (p.rng.random(), p.rng.random(), p.rng.random(), p.rng.random());
                    (
                        Complex64::new(a * to_best.re, b * to_best.im),
                        Complex64::new(c * to_global.re, d * to_global.im),
                    )
                } else {
                    let (a, b): (f64, f64) = (p.rng.random(), p.rng.random());
                    (to_best * a, to_global * b)
                };
                vel[e] = vel[e] * omega + pull_best * c1 + pull_global * c2;
                pos[e] += vel[e];
                project_radial(&mut pos[e], d_in, d_out);
                if best[e].norm() < d_in {
                    project_radial(&mut best[e], d_in, f64::INFINITY);
                }
            }
            let eval = ctx.evaluate(&p.position);
            if eval.fitness > p.best_fitness {
                p.best.copy_from(&p.position);
                p.best_fitness = eval.fitness;
            }
            eval
        })
        .collect();

    swarm.evaluations += evals.len();
    swarm.max_azf_residual = evals.iter().fold(swarm.max_azf_residual, merge_residual);
    let lead = best_index(&swarm.particles);
    swarm.g_best.copy_from(&swarm.particles[lead].best);
    swarm.g_best_fitness = swarm.particles[lead].best_fitness;

    let finite: Vec<f64> = evals.iter().map(|e| e.fitness).filter(|f| f.is_finite()).collect();
    if finite.is_empty() {
        f64::NEG_INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Outcome of a full swarm run.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// Final design, `None` when no candidate produced a usable precoder.
    pub design: Option<Design>,
    pub trace: Vec<TraceRow>,
    pub max_azf_residual: f64,
    pub evaluations: usize,
}

impl OptimizeResult {
    pub fn asr(&self) -> f64 {
        self.design.as_ref().map_or(0.0, |d| d.report.asr)
    }

    pub fn ee(&self) -> f64 {
        self.design.as_ref().map_or(0.0, |d| d.report.ee)
    }

    pub fn feasible(&self) -> bool {
        self.design.as_ref().is_some_and(|d| d.report.feasible)
    }

    /// Writes `iteration,g_best_fitness,mean_fitness,d_in` rows.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> crate::error::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "g_best_fitness", "mean_fitness", "d_in"])?;
        for row in &self.trace {
            w.write_record([
                row.iteration.to_string(),
                row.g_best_fitness.to_string(),
                row.mean_fitness.to_string(),
                row.d_in.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the swarm for `config.pso.n_iterations` steps and returns the best
/// constant-modulus design.
///
/// After the last step every personal best has been pushed onto the
/// constant-modulus circle, so stored fitness values may be stale; the final
/// design is the best of those projected positions after re-evaluation.
pub fn optimize(
    channels: &ChannelSet,
    grouping: &Grouping,
    config: &SystemConfig,
    seed: u64,
    mode: FitnessMode,
) -> OptimizeResult {
    let ctx = FitnessContext::new(channels, grouping, config, mode);
    let pso = &config.pso;
    let mut swarm = Swarm::init(&ctx, pso, seed);
    let mut trace = Vec::with_capacity(pso.n_iterations + 1);
    trace.push(TraceRow {
        iteration: 0,
        g_best_fitness: swarm.g_best_fitness,
        mean_fitness: swarm.mean_best_fitness(),
        d_in: 0.0,
    });
    for t in 1..=pso.n_iterations {
        let mean = pso_step(&mut swarm, t, &ctx, pso);
        trace.push(TraceRow {
            iteration: t,
            g_best_fitness: swarm.g_best_fitness,
            mean_fitness: mean,
            d_in: swarm.d_in,
        });
    }

    let finals: Vec<Evaluation> = swarm
        .particles
        .par_iter()
        .map(|p| ctx.evaluate(&p.best))
        .collect();
    swarm.evaluations += finals.len();
    swarm.max_azf_residual = finals.iter().fold(swarm.max_azf_residual, merge_residual);
    let mut lead = 0;
    for (l, e) in finals.iter().enumerate().skip(1) {
        if e.fitness > finals[lead].fitness {
            lead = l;
        }
    }
    OptimizeResult {
        design: ctx.design(&swarm.particles[lead].best),
        trace,
        max_azf_residual: swarm.max_azf_residual,
        evaluations: swarm.evaluations,
    }
}
