//! Discounted infinite-horizon LQ synthesis for `dx(k+1) = dx(k) + B du(k)`.
//!
//! The discounted criterion `sum beta^k (|dx|_Q^2 + |du|_R^2)` with
//! `beta = 1 / (1 + lambda)` is the undiscounted criterion of the scaled
//! system `A = sqrt(beta) I`, `B_s = sqrt(beta) B`, so the gain comes from a
//! standard discrete algebraic Riccati equation. It is solved with the
//! structured doubling algorithm and checked by its residual.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LqWeights {
    /// Diagonal of Q.
    pub state: DVector<f64>,
    /// Diagonal of R.
    pub control: DVector<f64>,
    /// lambda in `1 / (1 + lambda)^k`.
    pub discount: f64,
}

impl LqWeights {
    /// `Q = I`, `R = r I`.
    pub fn uniform(states: usize, controls: usize, r: f64, discount: f64) -> Self {
        Self {
            state: DVector::from_element(states, 1.0),
            control: DVector::from_element(controls, r),
            discount,
        }
    }

    pub fn beta(&self) -> f64 {
        1.0 / (1.0 + self.discount)
    }

    pub fn validate(&self) -> Result<()> {
        if self.state.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidWeights(
                "state weights must be finite and nonnegative".into(),
            ));
        }
        if self.control.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidWeights(
                "control weights must be finite and positive".into(),
            ));
        }
        if !(self.discount >= 0.0) || !self.discount.is_finite() {
            return Err(Error::InvalidWeights(format!(
                "discount must be finite and nonnegative, got {}",
                self.discount
            )));
        }
        Ok(())
    }

    fn check_shape(&self, b: &DMatrix<f64>) -> Result<()> {
        if b.nrows() != self.state.len() || b.ncols() != self.control.len() {
            return Err(Error::InvalidWeights(format!(
                "B is {}x{} but Q is {} and R is {}",
                b.nrows(),
                b.ncols(),
                self.state.len(),
                self.control.len()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("B has non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSynthesis {
    /// Riccati solution P (states x states).
    pub riccati: DMatrix<f64>,
    /// Feedback gain L (controls x states), `du = -L dx`.
    pub gain: DMatrix<f64>,
    /// Infinity norm of the Riccati equation residual at P.
    pub residual: f64,
    pub iterations: usize,
}

/// Solve the discounted LQ problem and return the stationary gain.
pub fn solve_discounted_dare(b: &DMatrix<f64>, weights: &LqWeights) -> Result<GainSynthesis> {
    weights.validate()?;
    weights.check_shape(b)?;
    let n = b.nrows();
    let beta = weights.beta();
    let q = DMatrix::from_diagonal(&weights.state);
    let r_inv = DMatrix::from_diagonal(&weights.control.map(|r| 1.0 / r));
    let identity = DMatrix::<f64>::identity(n, n);

    // Doubling iteration on (A, G, H) with G = B_s R^-1 B_s^T, H -> P.
    let mut a = &identity * beta.sqrt();
    let mut g = b * &r_inv * b.transpose() * beta;
    let mut h = q.clone();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let w = &identity + &g * &h;
        let lu = w.lu();
        let (Some(w_inv_a), Some(w_inv_g)) = (lu.solve(&a), lu.solve(&g)) else {
            return Err(Error::NoConvergence {
                iterations,
                residual: f64::INFINITY,
            });
        };
        let h_next = &h + a.transpose() * &h * &w_inv_a;
        let g_next = &g + &a * w_inv_g * a.transpose();
        let a_next = &a * &w_inv_a;
        let change = (&h_next - &h).abs().max();
        let scale = h_next.abs().max().max(1.0);
        h = h_next;
        g = g_next;
        a = a_next;
        if !h.iter().all(|v| v.is_finite()) {
            break;
        }
        if change <= 1e-15 * scale || a.abs().max() <= 1e-300 {
            break;
        }
    }

    let mut p = symmetrize(&h);
    let mut residual = dare_residual(b, weights, &p);
    // Polish with plain Riccati steps; each one contracts near the solution.
    while residual > RESIDUAL_TOLERANCE && residual.is_finite() && iterations < MAX_ITERATIONS {
        iterations += 1;
        p = symmetrize(&riccati_step(b, weights, &p));
        residual = dare_residual(b, weights, &p);
    }
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let gain = gain_from_riccati(b, weights, &p);
    Ok(GainSynthesis {
        riccati: p,
        gain,
        residual,
        iterations,
    })
}

/// `L = (R + beta B^T P B)^-1 beta B^T P`.
pub fn gain_from_riccati(b: &DMatrix<f64>, weights: &LqWeights, p: &DMatrix<f64>) -> DMatrix<f64> {
    let beta = weights.beta();
    let bt_p = b.transpose() * p;
    let lhs = DMatrix::from_diagonal(&weights.control) + &bt_p * b * beta;
    let rhs = bt_p * beta;
    match lhs.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => lhs.lu().solve(&rhs).expect("R + B'PB is nonsingular for R > 0"),
    }
}

/// One backward step of the discounted Riccati recursion.
fn riccati_step(b: &DMatrix<f64>, weights: &LqWeights, p: &DMatrix<f64>) -> DMatrix<f64> {
    let beta = weights.beta();
    let gain = gain_from_riccati(b, weights, p);
    // beta P - beta P B L, using the gain identity.
    let pb = p * b;
    DMatrix::from_diagonal(&weights.state) + p * beta - pb * gain * beta
}

/// `|P - (Q + A'PA - A'PB_s (R + B_s'PB_s)^-1 B_s'PA)|_inf` for the scaled system.
pub fn dare_residual(b: &DMatrix<f64>, weights: &LqWeights, p: &DMatrix<f64>) -> f64 {
    let diff = p - riccati_step(b, weights, p);
    diff.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Finite-horizon backward recursion from `P = Q`, run for `horizon`
/// stages; returns the gain of the first stage. Independent of the
/// doubling solver, used as its reference.
pub fn value_iteration_oracle(b: &DMatrix<f64>, weights: &LqWeights, horizon: usize) -> DMatrix<f64> {
    let beta = weights.beta();
    let q = DMatrix::from_diagonal(&weights.state);
    let r = DMatrix::from_diagonal(&weights.control);
    let mut p = q.clone();
    for _ in 1..horizon.max(1) {
        let bt_p = b.transpose() * &p;
        let s = &r + &bt_p * b * beta;
        let s_inv = s.try_inverse().expect("R + B'PB invertible");
        let next = &q + &p * beta - (&p * b) * s_inv * bt_p * (beta * beta);
        let next = symmetrize(&next);
        let settled = (&next - &p).abs().max() == 0.0;
        p = next;
        if settled {
            break;
        }
    }
    let bt_p = b.transpose() * &p;
    let s = &r + &bt_p * b * beta;
    s.try_inverse().expect("R + B'PB invertible") * bt_p * beta
}

/// Spectral radius of `sqrt(beta) (I - B L)`.
pub fn closed_loop_radius(b: &DMatrix<f64>, gain: &DMatrix<f64>, discount: f64) -> f64 {
    let n = b.nrows();
    let m = (DMatrix::<f64>::identity(n, n) - b * gain) * (1.0 / (1.0 + discount)).sqrt();
    spectral_radius(&m)
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    match m.clone().try_schur(1e-14, 100_000) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => {
            // Gelfand's formula as a fallback.
            let mut power = m.clone();
            let mut k = 1.0;
            for _ in 0..8 {
                power = &power * &power;
                k *= 2.0;
            }
            power.norm().powf(1.0 / k)
        }
    }
}

/// Webster's near-optimal cycle, clamped to `[c_min, c_max]`.
pub fn webster_cycle(lost_time: f64, load: f64, c_min: f64, c_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&load) {
        return Err(Error::LoadOutOfRange(load));
    }
    if !(lost_time >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lost time must be nonnegative, got {lost_time}"
        )));
    }
    if !(c_min <= c_max) {
        return Err(Error::InvalidArgument(format!(
            "empty cycle interval [{c_min}, {c_max}]"
        )));
    }
    Ok(((1.5 * lost_time + 5.0) / (1.0 - load)).clamp(c_min, c_max))
}

/// Default lost time: two seconds per phase change, two changes per phase.
pub fn default_lost_time(phases: usize) -> f64 {
    2.0 * phases as f64 * 2.0
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
