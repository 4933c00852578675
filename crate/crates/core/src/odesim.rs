//! Fixed-step RK4 propagation with path guards and touchdown detection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::{csv_row, sig9};

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step<const N: usize, F>(deriv: &F, state: &[f64; N], t: f64, dt: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let k1 = deriv(t, state);
    let k2 = deriv(t + 0.5 * dt, &axpy(state, 0.5 * dt, &k1));
    let k3 = deriv(t + 0.5 * dt, &axpy(state, 0.5 * dt, &k2));
    let k4 = deriv(t + dt, &axpy(state, dt, &k3));
    let mut out = *state;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn axpy<const N: usize>(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += a * y[i];
    }
    out
}

/// A guard that fired: which quantity, and by how much it left its bounds
/// (normalized by the bound magnitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardViolation {
    pub guard: String,
    pub excess: f64,
}

/// Per-step path check on `(t, state, control)`; `None` means satisfied.
pub type Guard<'a, const N: usize> = Box<dyn Fn(f64, &[f64; N], f64) -> Option<GuardViolation> + Send + Sync + 'a>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Landed,
    PathViolation { guard: String, time: f64, excess: f64 },
    TimeExpired,
}

impl Status {
    pub fn is_landed(&self) -> bool {
        matches!(self, Status::Landed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Status::Landed => "landed",
            Status::PathViolation { .. } => "path_violation",
            Status::TimeExpired => "time_expired",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub t_f: f64,
    pub x_f: f64,
}

/// Time-indexed record of one propagation.
///
/// `states` is stored row-major with `dim` components per sample. For a
/// landed trajectory the last sample is the interpolated touchdown point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub status: Status,
    pub terminal: Option<Terminal>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial sample")
    }

    /// Writes `t, <state columns>, control` rows followed by a status footer.
    pub fn write_csv<W: Write>(&self, mut out: W, state_names: &[&str]) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for i in 0..self.dim {
            header.push(state_names.get(i).map_or_else(|| format!("x{i}"), |s| s.to_string()));
        }
        header.push("control".into());
        out.write_all(csv_row(&header).as_bytes())?;
        for i in 0..self.len() {
            let mut row = vec![sig9(self.times[i])];
            row.extend(self.state(i).iter().map(|&v| sig9(v)));
            row.push(sig9(self.controls[i]));
            out.write_all(csv_row(&row).as_bytes())?;
        }
        let footer = match (&self.status, &self.terminal) {
            (Status::Landed, Some(term)) => {
                vec!["status".into(), "landed".into(), sig9(term.t_f), sig9(term.x_f)]
            }
            (Status::PathViolation { guard, time, excess }, _) => vec![
                "status".into(),
                "path_violation".into(),
                guard.clone(),
                sig9(*time),
                sig9(*excess),
            ],
            (status, _) => vec!["status".into(), status.label().into()],
        };
        out.write_all(csv_row(&footer).as_bytes())?;
        Ok(())
    }
}

/// Linear interpolation of the touchdown point between two samples
/// `(t, z, x)` that bracket `z = 0`.
pub fn touchdown_interpolate(prev: (f64, f64, f64), next: (f64, f64, f64)) -> Result<(f64, f64)> {
    let (t0, z0, x0) = prev;
    let (t1, z1, x1) = next;
    if !(z0 > 0.0 && z1 <= 0.0) {
        return Err(Error::NotBracketing { prev: z0, next: z1 });
    }
    if z1 == 0.0 {
        return Ok((t1, x1));
    }
    let frac = z0 / (z0 - z1);
    Ok((t0 + frac * (t1 - t0), x0 + frac * (x1 - x0)))
}

/// Which state components hold altitude and downrange distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Touchdown {
    pub altitude: usize,
    pub downrange: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub dt: f64,
    pub t_max: f64,
    pub touchdown: Touchdown,
}

const NON_FINITE_GUARD: &str = "non_finite";

impl Propagator {
    pub fn new(dt: f64, t_max: f64, touchdown: Touchdown) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Integration(format!("dt must be positive, got {dt}")));
        }
        if !(t_max >= dt) {
            return Err(Error::Integration(format!("t_max ({t_max}) must be >= dt ({dt})")));
        }
        Ok(Self { dt, t_max, touchdown })
    }

    /// Integrates until touchdown, a guard fires, or `t_max` is reached.
    ///
    /// `deriv(t, state, control)` is evaluated with the control held at its
    /// value at the start of each step. Guards are checked on the state at the
    /// end of each full step.
    pub fn propagate<const N: usize, D, C>(
        &self,
        deriv: D,
        x0: [f64; N],
        control_at: C,
        guards: &[Guard<'_, N>],
    ) -> Trajectory
    where
        D: Fn(f64, &[f64; N], f64) -> [f64; N],
        C: Fn(f64) -> f64,
    {
        let n_steps = (self.t_max / self.dt - 1e-9).ceil() as usize;
        let Touchdown { altitude, downrange } = self.touchdown;

        let mut times = Vec::with_capacity(n_steps + 1);
        let mut states = Vec::with_capacity((n_steps + 1) * N);
        let mut controls = Vec::with_capacity(n_steps + 1);

        let mut x = x0;
        let mut u = control_at(0.0);
        times.push(0.0);
        states.extend_from_slice(&x);
        controls.push(u);

        let mut status = Status::TimeExpired;
        let mut terminal = None;

        for k in 0..n_steps {
            let t = k as f64 * self.dt;
            let t_next = (k + 1) as f64 * self.dt;
            u = control_at(t);
            let held = u;
            let next = rk4_step(&|tt, s: &[f64; N]| deriv(tt, s, held), &x, t, self.dt);

            if next.iter().any(|v| !v.is_finite()) {
                status = Status::PathViolation {
                    guard: NON_FINITE_GUARD.into(),
                    time: t_next,
                    excess: 1.0,
                };
                break;
            }

            if next[altitude] <= 0.0 {
                // previous sample is airborne: every stored state passed the z > 0 check
                let (t_f, x_f) = touchdown_interpolate(
                    (t, x[altitude], x[downrange]),
                    (t_next, next[altitude], next[downrange]),
                )
                .expect("bracketing by construction");
                let frac = if t_next > t { (t_f - t) / (t_next - t) } else { 1.0 };
                let mut touch = x;
                for i in 0..N {
                    touch[i] = x[i] + frac * (next[i] - x[i]);
                }
                touch[altitude] = 0.0;
                touch[downrange] = x_f;
                times.push(t_f);
                states.extend_from_slice(&touch);
                controls.push(held);
                status = Status::Landed;
                terminal = Some(Terminal { t_f, x_f });
                break;
            }

            times.push(t_next);
            states.extend_from_slice(&next);
            controls.push(held);
            x = next;

            if let Some(v) = guards.iter().find_map(|g| g(t_next, &x, held)) {
                status = Status::PathViolation {
                    guard: v.guard,
                    time: t_next,
                    excess: v.excess,
                };
                break;
            }
        }

        Trajectory {
            dim: N,
            times,
            states,
            controls,
            status,
            terminal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TD: Touchdown = Touchdown {
        altitude: 0,
        downrange: 1,
    };

    #[test]
    fn rk4_trivial_fields() {
        let zero = |_t: f64, _x: &[f64; 1]| [0.0];
        assert_eq!(rk4_step(&zero, &[3.0], 0.0, 0.1), [3.0]);
        let one = |_t: f64, _x: &[f64; 1]| [1.0];
        assert!((rk4_step(&one, &[3.0], 0.0, 0.1)[0] - 3.1).abs() < 1e-15);
        let exp = |_t: f64, x: &[f64; 1]| [x[0]];
        let y = rk4_step(&exp, &[1.0], 0.0, 0.1)[0];
        assert!((y - 0.1f64.exp()).abs() < 1e-7);
        assert!((y - 1.1051708).abs() < 1e-7);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let f = |_t: f64, x: &[f64; 1]| [x[0]];
        let err = |n: usize| {
            let dt = 1.0 / n as f64;
            let mut x = [1.0];
            for k in 0..n {
                x = rk4_step(&f, &x, k as f64 * dt, dt);
            }
            (x[0] - 1f64.exp()).abs()
        };
        for n in [5, 10, 20] {
            let ratio = err(n) / err(2 * n);
            assert!(ratio >= 14.0, "n={n} ratio={ratio}");
        }
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(touchdown_interpolate((0.0, 1.0, 0.0), (0.1, -1.0, 10.0)).unwrap(), (0.05, 5.0));
        assert_eq!(touchdown_interpolate((0.0, 1.0, 0.0), (0.1, 0.0, 10.0)).unwrap(), (0.1, 10.0));
        let (t, x) = touchdown_interpolate((0.0, 3.0, 0.0), (0.1, -1.0, 4.0)).unwrap();
        assert!((t - 0.075).abs() < 1e-15 && (x - 3.0).abs() < 1e-15);
        assert!(touchdown_interpolate((0.0, -1.0, 0.0), (0.1, -2.0, 1.0)).is_err());
        assert!(touchdown_interpolate((0.0, 1.0, 0.0), (0.1, 0.5, 1.0)).is_err());
    }

    fn descent(z0: f64, rate: f64, t_max: f64) -> Trajectory {
        let p = Propagator::new(0.1, t_max, TD).unwrap();
        p.propagate(|_t, _x: &[f64; 2], _u| [rate, 1.0], [z0, 0.0], |_| 0.0, &[])
    }

    #[test]
    fn analytic_descent_lands() {
        let tr = descent(1000.0, -10.0, 240.0);
        assert_eq!(tr.status, Status::Landed);
        let term = tr.terminal.unwrap();
        assert!((term.t_f - 100.0).abs() < 1e-9, "t_f = {}", term.t_f);
        assert!((term.x_f - 100.0).abs() < 1e-9);
        assert_eq!(tr.last_state()[0], 0.0);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn time_expiry() {
        let tr = descent(1000.0, 0.0, 5.0);
        assert_eq!(tr.status, Status::TimeExpired);
        assert!(tr.terminal.is_none());
        assert_eq!(tr.len(), 51);
        assert!((tr.end_time() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn guard_terminates_after_first_step() {
        let p = Propagator::new(0.1, 10.0, TD).unwrap();
        let guards: Vec<Guard<'_, 2>> = vec![Box::new(|_t, _x, _u| {
            Some(GuardViolation {
                guard: "always".into(),
                excess: 0.5,
            })
        })];
        let tr = p.propagate(|_t, _x: &[f64; 2], _u| [-1.0, 1.0], [10.0, 0.0], |_| 0.0, &guards);
        assert_eq!(tr.len(), 2);
        match tr.status {
            Status::PathViolation { ref guard, time, excess } => {
                assert_eq!(guard, "always");
                assert!((time - 0.1).abs() < 1e-15);
                assert_eq!(excess, 0.5);
            }
            ref s => panic!("unexpected status {s:?}"),
        }
    }

    #[test]
    fn non_finite_derivative_aborts() {
        let p = Propagator::new(0.1, 10.0, TD).unwrap();
        let tr = p.propagate(
            |t, _x: &[f64; 2], _u| if t > 0.25 { [f64::NAN, 0.0] } else { [-1.0, 0.0] },
            [10.0, 0.0],
            |_| 0.0,
            &[],
        );
        assert!(matches!(tr.status, Status::PathViolation { ref guard, .. } if guard == "non_finite"));
        assert!(tr.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn control_is_zero_order_hold() {
        let p = Propagator::new(0.1, 1.0, TD).unwrap();
        // the control is sampled at step starts only
        let tr = p.propagate(
            |_t, _x: &[f64; 2], u| [0.0, u],
            [1.0, 0.0],
            |t| if t < 0.5 - 1e-9 { 1.0 } else { 2.0 },
            &[],
        );
        assert!((tr.state(5)[1] - 0.5).abs() < 1e-12);
        assert!((tr.state(10)[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_settings() {
        assert!(Propagator::new(0.0, 1.0, TD).is_err());
        assert!(Propagator::new(0.1, 0.05, TD).is_err());
    }

    #[test]
    fn deterministic_and_csv() {
        let a = descent(1.0, -3.0, 2.0);
        let b = descent(1.0, -3.0, 2.0);
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf, &["z", "x"]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,z,x,control");
        assert_eq!(lines[1], "0,1,0,0");
        assert!(lines.last().unwrap().starts_with("status,landed,0.333333333"));
    }
}
