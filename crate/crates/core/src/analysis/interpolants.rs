//! Piecewise-linear (hat) and piecewise-constant (bar) reconstructions of a
//! discrete trajectory in time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stepper::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Theta,
    Phi,
    V,
    Z,
    /// The step-averaged source `f_n`; only has a bar interpolant.
    F,
}

impl Field {
    pub const STATE: [Field; 4] = [Field::Theta, Field::Phi, Field::V, Field::Z];

    pub fn name(self) -> &'static str {
        match self {
            Field::Theta => "theta",
            Field::Phi => "phi",
            Field::V => "v",
            Field::Z => "z",
            Field::F => "f",
        }
    }
}

/// Time interpolants over `[0, T]`.
///
/// Hat functions are continuous with `hat(nh) = x_n`. Bar functions take the
/// value `x_{n+1}` on `(nh, (n+1)h]`, and `x_1` at `t = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Interpolants<'a> {
    traj: &'a Trajectory,
}

pub fn build_interpolants(traj: &Trajectory) -> Interpolants<'_> {
    Interpolants { traj }
}

impl<'a> Interpolants<'a> {
    pub fn trajectory(&self) -> &'a Trajectory {
        self.traj
    }

    pub fn steps(&self) -> usize {
        self.traj.steps()
    }

    pub fn h(&self) -> f64 {
        self.traj.h()
    }

    /// Nodal value `x_n`; for `F` this is `f_n` with `n >= 1`.
    pub fn nodal(&self, field: Field, n: usize) -> &'a [f64] {
        let s = &self.traj.states[n];
        match field {
            Field::Theta => &s.theta,
            Field::Phi => &s.phi,
            Field::V => &s.v,
            Field::Z => &s.z,
            Field::F => &self.traj.sources[n.max(1) - 1],
        }
    }

    /// Hat value on interval `n` at local coordinate `s in [0, 1]`.
    pub fn hat_on(&self, field: Field, n: usize, s: f64) -> Vec<f64> {
        let a = self.nodal(field, n);
        let b = self.nodal(field, n + 1);
        if s == 0.0 {
            return a.to_vec();
        }
        if s == 1.0 {
            return b.to_vec();
        }
        a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect()
    }

    /// Bar value on the open interval `(nh, (n+1)h)`.
    pub fn bar_on(&self, field: Field, n: usize) -> &'a [f64] {
        self.nodal(field, n + 1)
    }

    /// Derivative `(x_{n+1} - x_n) / h` of the hat function on interval `n`.
    pub fn hat_slope_on(&self, field: Field, n: usize) -> Vec<f64> {
        let h = self.h();
        let a = self.nodal(field, n);
        let b = self.nodal(field, n + 1);
        a.iter().zip(b).map(|(x, y)| (y - x) / h).collect()
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let final_time = self.traj.final_time();
        if !(t >= 0.0 && t <= final_time) {
            return Err(Error::TimeOutOfRange { t, final_time });
        }
        let x = t / self.h();
        let n = (x.floor() as usize).min(self.steps() - 1);
        Ok((n, (x - n as f64).clamp(0.0, 1.0)))
    }

    pub fn hat(&self, field: Field, t: f64) -> Result<Vec<f64>> {
        if field == Field::F || field == Field::Z {
            return Err(Error::Incomparable(format!("no hat interpolant for {}", field.name())));
        }
        let (n, s) = self.locate(t)?;
        Ok(self.hat_on(field, n, s))
    }

    pub fn bar(&self, field: Field, t: f64) -> Result<Vec<f64>> {
        let (n, s) = self.locate(t)?;
        // right-aligned: the grid time (n+1)h belongs to interval n
        let n = if s == 0.0 && n > 0 { n - 1 } else { n };
        Ok(self.bar_on(field, n).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_core::{LipschitzPerturbation, NonlinearPotential};
    use crate::spatial::{zero_source, Grid, ProblemInstance};
    use crate::stepper::{advance_trajectory, SchemeConfig};

    fn run(theta: f64, phi: f64) -> Trajectory {
        let g = Grid::line(5, 1.0).unwrap();
        let inst = ProblemInstance::p1(
            g.clone(),
            NonlinearPotential::zero(),
            LipschitzPerturbation::zero(),
            g.sample(|x| theta * (std::f64::consts::PI * x[0]).sin()),
            vec![phi; 5],
            vec![0.0; 5],
            zero_source(5),
        )
        .unwrap();
        advance_trajectory(&inst, &SchemeConfig::for_instance(&inst, 0.5, 4)).unwrap()
    }

    #[test]
    fn hat_and_bar_at_grid_times() {
        let traj = run(1.0, 0.3);
        let ip = build_interpolants(&traj);
        let h = traj.h();
        for n in 0..=4 {
            assert_eq!(ip.hat(Field::Theta, n as f64 * h).unwrap(), traj.states[n].theta);
        }
        let mid = ip.hat(Field::Theta, 1.5 * h).unwrap();
        for i in 0..5 {
            let expect = 0.5 * (traj.states[1].theta[i] + traj.states[2].theta[i]);
            assert!((mid[i] - expect).abs() < 1e-15);
        }
        assert_eq!(ip.bar(Field::Theta, 0.0).unwrap(), traj.states[1].theta);
        assert_eq!(ip.bar(Field::Theta, h).unwrap(), traj.states[1].theta);
        assert_eq!(ip.bar(Field::Theta, 1.2 * h).unwrap(), traj.states[2].theta);
        assert_eq!(ip.bar(Field::Theta, 0.5).unwrap(), traj.states[4].theta);
        assert!(ip.hat(Field::Theta, 0.6).is_err());
        assert!(ip.bar(Field::V, -0.1).is_err());
    }

    #[test]
    fn constant_trajectory_interpolants_are_constant() {
        // phi constant with Neumann bc, no potential: phi stays put
        let traj = run(0.0, 0.3);
        let ip = build_interpolants(&traj);
        for k in 0..=10 {
            let t = 0.05 * k as f64;
            for v in ip.hat(Field::Phi, t).unwrap().into_iter().chain(ip.bar(Field::Phi, t).unwrap()) {
                assert!((v - 0.3).abs() < 1e-12);
            }
        }
    }
}
