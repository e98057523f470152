//! Random system realizations: user placement, repetition factors, access
//! patterns, pilots, activities, fading, and the received pilot and data
//! signals they produce.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use std::f64::consts::PI;

use crate::config::{db_to_linear, PilotType, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};
use crate::rng::complex_normal;

/// Per-user large-scale quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPopulation {
    /// Path-loss coefficient (linear).
    pub beta: Vec<f64>,
    /// Distance to the base station in meters.
    pub radius: Vec<f64>,
    /// Repetition factor.
    pub degree: Vec<usize>,
}

impl UserPopulation {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Binary `T x M` matrix of the resource blocks each user would occupy if
/// active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPatternMatrix {
    rbs: usize,
    users: usize,
    // row-major: entry (t, m) at t * users + m
    g: Vec<bool>,
}

impl AccessPatternMatrix {
    pub fn zeros(rbs: usize, users: usize) -> Self {
        AccessPatternMatrix {
            rbs,
            users,
            g: vec![false; rbs * users],
        }
    }

    /// Build from the list of occupied resource blocks of every user.
    pub fn from_user_rbs(rbs: usize, user_rbs: &[Vec<usize>]) -> Self {
        let mut apm = AccessPatternMatrix::zeros(rbs, user_rbs.len());
        for (m, list) in user_rbs.iter().enumerate() {
            for &t in list {
                apm.set(t, m, true);
            }
        }
        apm
    }

    pub fn rbs(&self) -> usize {
        self.rbs
    }

    pub fn users(&self) -> usize {
        self.users
    }

    #[inline]
    pub fn get(&self, t: usize, m: usize) -> bool {
        self.g[t * self.users + m]
    }

    pub fn set(&mut self, t: usize, m: usize, value: bool) {
        self.g[t * self.users + m] = value;
    }

    /// Users scheduled in resource block `t`, ascending.
    pub fn rb_members(&self, t: usize) -> Vec<usize> {
        let row = &self.g[t * self.users..(t + 1) * self.users];
        row.iter().enumerate().filter(|(_, &b)| b).map(|(m, _)| m).collect()
    }

    /// Resource blocks occupied by user `m`, ascending.
    pub fn user_rbs(&self, m: usize) -> Vec<usize> {
        (0..self.rbs).filter(|&t| self.get(t, m)).collect()
    }

    /// Column sums (repetition factors).
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.users];
        for t in 0..self.rbs {
            for (m, dm) in d.iter_mut().enumerate() {
                *dm += self.get(t, m) as usize;
            }
        }
        d
    }
}

/// Pilot sequences, one column per user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub p: CMatrix,
}

impl PilotBook {
    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn users(&self) -> usize {
        self.p.ncols()
    }

    pub fn pilot(&self, m: usize) -> CVector {
        self.p.column(m).into_owned()
    }

    /// `p_i^H p_j`.
    pub fn inner(&self, i: usize, j: usize) -> Complex64 {
        self.p.column(i).dotc(&self.p.column(j))
    }

    pub fn norm_sqr(&self, m: usize) -> f64 {
        self.p.column(m).norm_squared()
    }
}

/// Ground truth of one frame.
///
/// Noise is stored at unit variance and scaled by `sqrt(N0)` when signals
/// are synthesized, so the same frame can be replayed at several noise
/// levels and regenerated for any subset of users.
#[derive(Debug, Clone)]
pub struct FrameRealization {
    pub active: Vec<bool>,
    /// Per resource block, `N x M`; column `m` is `h_tm = sqrt(beta_m) v_tm`.
    pub channels: Vec<CMatrix>,
    /// Data symbol of every user, power `P`.
    pub data: Vec<Complex64>,
    /// Per resource block, `N x tau` unit-variance pilot noise.
    pub pilot_noise: Vec<CMatrix>,
    /// Per resource block, length-`N` unit-variance data noise.
    pub data_noise: Vec<CVector>,
}

impl FrameRealization {
    pub fn channel(&self, t: usize, m: usize) -> CVector {
        self.channels[t].column(m).into_owned()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// Received signals of one frame.
#[derive(Debug, Clone)]
pub struct ReceivedSignals {
    /// Per resource block, the `N x tau` pilot observation.
    pub pilot: Vec<CMatrix>,
    /// Per resource block, the length-`N` data observation.
    pub data: Vec<CVector>,
    pub n0: f64,
}

impl ReceivedSignals {
    /// `Ybar_t = (Y_t^p)^H`, the `tau x N` form used for activity detection.
    pub fn ybar(&self, t: usize) -> CMatrix {
        self.pilot[t].adjoint()
    }
}

/// Truncated ideal soliton over degrees `1..=k_s`; entry `d-1` is the
/// probability of degree `d`.
pub fn soliton_pmf(k_s: usize) -> Vec<f64> {
    assert!(k_s >= 1, "soliton support must contain degree 1");
    let k = k_s as f64;
    let mut pmf: Vec<f64> = (1..=k_s)
        .map(|d| {
            if d == 1 {
                1.0 / k
            } else {
                let d = d as f64;
                1.0 / (d * (d - 1.0))
            }
        })
        .collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Mean of a degree pmf indexed from degree 1.
pub fn pmf_mean(pmf: &[f64]) -> f64 {
    pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
}

/// Sample repetition factors from `pmf` and place each user's replicas in
/// distinct resource blocks chosen uniformly at random. Degrees above `T`
/// are clamped to `T`.
pub fn generate_apm<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    rbs: usize,
    pmf: &[f64],
) -> (AccessPatternMatrix, Vec<usize>) {
    let degree_dist = WeightedIndex::new(pmf).expect("degree pmf must be a valid distribution");
    let mut apm = AccessPatternMatrix::zeros(rbs, users);
    let mut degrees = Vec::with_capacity(users);
    for m in 0..users {
        let d = (degree_dist.sample(rng) + 1).min(rbs);
        for t in index::sample(rng, rbs, d) {
            apm.set(t, m, true);
        }
        degrees.push(d);
    }
    (apm, degrees)
}

/// `(max(r, r0) / r0)^(-alpha)`: unit gain inside the reference distance.
pub fn path_loss(radius: f64, r0: f64, alpha: f64) -> f64 {
    (radius.max(r0) / r0).powf(-alpha)
}

/// Drop `users` uniformly over the disk of radius `r_max` around the base
/// station; returns `(radius, beta)`.
pub fn place_users<R: Rng + ?Sized>(
    rng: &mut R,
    users: usize,
    r_max: f64,
    r0: f64,
    alpha: f64,
) -> (Vec<f64>, Vec<f64>) {
    let radius: Vec<f64> = (0..users)
        .map(|_| {
            let u: f64 = rng.random_range(0.0..=1.0);
            r_max * u.sqrt()
        })
        .collect();
    let beta = radius.iter().map(|&r| path_loss(r, r0, alpha)).collect();
    (radius, beta)
}

/// Noise variance giving SNR `cell_edge_snr_db` to a user with path loss
/// `beta_edge`: `N0 = P·sigma_h2·beta_edge / snr`.
pub fn noise_variance(data_power: f64, fading_var: f64, beta_edge: f64, cell_edge_snr_db: f64) -> f64 {
    data_power * fading_var * beta_edge / db_to_linear(cell_edge_snr_db)
}

pub fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sylvester-type Hadamard matrix of order `n` (a power of two), entries ±1.
pub fn hadamard(n: usize) -> DMatrix<f64> {
    assert!(n.is_power_of_two());
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < n {
        let k = h.nrows();
        let mut next = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                let v = h[(i, j)];
                next[(i, j)] = v;
                next[(i, j + k)] = v;
                next[(i + k, j)] = v;
                next[(i + k, j + k)] = -v;
            }
        }
        h = next;
    }
    h
}

/// Zadoff-Chu sequence of prime length `tau` and root `root`, unit modulus.
pub fn zadoff_chu(tau: usize, root: usize) -> Vec<Complex64> {
    (0..tau)
        .map(|n| {
            let n = n as f64;
            Complex64::from_polar(1.0, -PI * root as f64 * n * (n + 1.0) / tau as f64)
        })
        .collect()
}

/// Draw a pilot book of the given family with per-symbol power `pilot_power`.
pub fn generate_pilots<R: Rng + ?Sized>(
    rng: &mut R,
    kind: PilotType,
    tau: usize,
    users: usize,
    pilot_power: f64,
) -> Result<PilotBook> {
    let amp = pilot_power.sqrt();
    let mut p = CMatrix::zeros(tau, users);
    match kind {
        PilotType::Gaussian => {
            for z in p.iter_mut() {
                *z = complex_normal(rng, pilot_power);
            }
        }
        PilotType::Bpsk => {
            for z in p.iter_mut() {
                *z = c(if rng.random::<bool>() { amp } else { -amp });
            }
        }
        PilotType::Qpsk => {
            for z in p.iter_mut() {
                let k = rng.random_range(0..4) as f64;
                *z = Complex64::from_polar(amp, PI / 4.0 + k * PI / 2.0);
            }
        }
        PilotType::ZadoffChu => {
            if !is_prime(tau) {
                return Err(Error::InvalidConfig {
                    key: "tau",
                    value: tau.to_string(),
                    accepted: "prime length for zadoff_chu pilots",
                });
            }
            let roots: Vec<usize> = (1..tau.max(2)).filter(|&u| gcd(u, tau) == 1).collect();
            for m in 0..users {
                let seq = zadoff_chu(tau, roots[m % roots.len()]);
                for (n, z) in seq.into_iter().enumerate() {
                    p[(n, m)] = z * amp;
                }
            }
        }
        PilotType::HadamardOpr => {
            if !tau.is_power_of_two() {
                return Err(Error::InvalidConfig {
                    key: "tau",
                    value: tau.to_string(),
                    accepted: "power-of-two length for hadamard_opr pilots",
                });
            }
            let h = hadamard(tau);
            for m in 0..users {
                let col = rng.random_range(0..tau);
                for n in 0..tau {
                    p[(n, m)] = c(amp * h[(n, col)]);
                }
            }
        }
        PilotType::DftOpr => {
            for m in 0..users {
                let col = rng.random_range(0..tau) as f64;
                for n in 0..tau {
                    p[(n, m)] =
                        Complex64::from_polar(amp, -2.0 * PI * n as f64 * col / tau as f64);
                }
            }
        }
    }
    Ok(PilotBook { p })
}

/// Draw activities, fading channels, data symbols and unit-variance noise.
pub fn sample_frame<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SystemConfig,
    population: &UserPopulation,
) -> FrameRealization {
    let m_users = population.len();
    let n = config.antennas;
    let tau = config.pilot_len;
    let active: Vec<bool> = (0..m_users)
        .map(|_| rng.random::<f64>() < config.activity_prob)
        .collect();
    let channels = (0..config.rbs)
        .map(|_| {
            let mut h = CMatrix::zeros(n, m_users);
            for m in 0..m_users {
                let sb = population.beta[m].sqrt();
                for z in h.column_mut(m).iter_mut() {
                    *z = complex_normal(rng, config.fading_var) * sb;
                }
            }
            h
        })
        .collect();
    let p = config.data_power();
    let data = (0..m_users).map(|_| complex_normal(rng, p)).collect();
    let pilot_noise = (0..config.rbs)
        .map(|_| CMatrix::from_fn(n, tau, |_, _| complex_normal(rng, 1.0)))
        .collect();
    let data_noise = (0..config.rbs)
        .map(|_| CVector::from_fn(n, |_, _| complex_normal(rng, 1.0)))
        .collect();
    FrameRealization {
        active,
        channels,
        data,
        pilot_noise,
        data_noise,
    }
}

fn included(subset: Option<&[bool]>, m: usize) -> bool {
    subset.is_none_or(|s| s[m])
}

/// `Y_t^p = sum_m a_m g_tm h_tm p_m^H + sqrt(N0)·noise` over users in
/// `subset` (all users when `None`).
pub fn synthesize_pilot_rx(
    frame: &FrameRealization,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    n0: f64,
    subset: Option<&[bool]>,
) -> Vec<CMatrix> {
    (0..apm.rbs())
        .map(|t| pilot_rx_rb(frame, apm, pilots, n0, subset, t))
        .collect()
}

/// Received pilot of a single resource block.
pub fn pilot_rx_rb(
    frame: &FrameRealization,
    apm: &AccessPatternMatrix,
    pilots: &PilotBook,
    n0: f64,
    subset: Option<&[bool]>,
    t: usize,
) -> CMatrix {
    let mut y = &frame.pilot_noise[t] * c(n0.sqrt());
    for m in 0..apm.users() {
        if frame.active[m] && apm.get(t, m) && included(subset, m) {
            let h = frame.channels[t].column(m);
            let p = pilots.p.column(m);
            // rank-one update h p^H
            y.ger(Complex64::new(1.0, 0.0), &h, &p.map(|z| z.conj()), Complex64::new(1.0, 0.0));
        }
    }
    y
}

/// `y_t = sum_m a_m g_tm h_tm x_m + sqrt(N0)·noise` over users in `subset`.
pub fn synthesize_data_rx(
    frame: &FrameRealization,
    apm: &AccessPatternMatrix,
    n0: f64,
    subset: Option<&[bool]>,
) -> Vec<CVector> {
    (0..apm.rbs())
        .map(|t| {
            let mut y = &frame.data_noise[t] * c(n0.sqrt());
            for m in 0..apm.users() {
                if frame.active[m] && apm.get(t, m) && included(subset, m) {
                    y.axpy(frame.data[m], &frame.channels[t].column(m), Complex64::new(1.0, 0.0));
                }
            }
            y
        })
        .collect()
}

/// Everything drawn for one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub population: UserPopulation,
    pub apm: AccessPatternMatrix,
    pub pilots: PilotBook,
    pub frame: FrameRealization,
    pub n0: f64,
}

impl Scenario {
    /// Draw a fresh population, access pattern, pilot book and frame.
    pub fn generate<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<Scenario> {
        config.validate()?;
        let m_users = config.num_users();
        let (radius, beta) = place_users(
            rng,
            m_users,
            config.r_max,
            config.r0,
            config.path_loss_exp,
        );
        let pmf = soliton_pmf(config.soliton_max_degree);
        let (apm, degree) = generate_apm(rng, m_users, config.rbs, &pmf);
        let pilots = generate_pilots(
            rng,
            config.pilot_type,
            config.pilot_len,
            m_users,
            config.pilot_power(),
        )?;
        let population = UserPopulation {
            beta,
            radius,
            degree,
        };
        let frame = sample_frame(rng, config, &population);
        Ok(Scenario {
            population,
            apm,
            pilots,
            frame,
            n0: config.noise_variance(),
        })
    }

    /// Pilot and data observations with every user included.
    pub fn received(&self) -> ReceivedSignals {
        ReceivedSignals {
            pilot: synthesize_pilot_rx(&self.frame, &self.apm, &self.pilots, self.n0, None),
            data: synthesize_data_rx(&self.frame, &self.apm, self.n0, None),
            n0: self.n0,
        }
    }
}
