//! DOP853 integration sampled at prescribed times.
//!
//! Each sampling interval is integrated as its own segment so every sample
//! is a genuine step endpoint at full accuracy; the accepted step size is
//! carried across segments. Time travels as an extra state component, so
//! the right-hand side always sees the stage time implied by the tableau
//! weights rather than the solver's own abscissae.

use ode_solvers::dop_shared::IntegrationError;
use ode_solvers::{DVector, Dop853, OutputType, System};

use crate::error::{Error, Result};

/// `(y, t)` with `dt/dx = 1`.
struct Autonomous<'a, S> {
    inner: &'a S,
    dim: usize,
}

impl<S: System<f64, DVector<f64>>> System<f64, DVector<f64>> for Autonomous<'_, S> {
    fn system(&self, _x: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let state = y.rows(0, self.dim).into_owned();
        let mut rate = DVector::zeros(self.dim);
        self.inner.system(y[self.dim], &state, &mut rate);
        dy.rows_mut(0, self.dim).copy_from(&rate);
        dy[self.dim] = 1.0;
    }
}

fn augmented(y: &DVector<f64>, t: f64) -> DVector<f64> {
    let mut out = y.clone().resize_vertically(y.len() + 1, 0.0);
    out[y.len()] = t;
    out
}

pub struct Sampled {
    pub t: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub evaluations: u64,
    pub steps: u64,
}

/// Integrates `system` through the ascending `times`, returning the state at each.
///
/// The stiffness heuristic is disabled: purely oscillatory systems sit on
/// the imaginary axis and trip it without being stiff.
pub fn integrate_sampled<S>(
    system: &S,
    times: &[f64],
    y0: DVector<f64>,
    rtol: f64,
    atol: f64,
    max_steps: u64,
    mut on_sample: impl FnMut(usize, f64, &DVector<f64>) -> Result<()>,
) -> Result<Sampled>
where
    S: System<f64, DVector<f64>>,
{
    let mut out = Sampled {
        t: Vec::with_capacity(times.len()),
        y: Vec::with_capacity(times.len()),
        evaluations: 0,
        steps: 0,
    };
    let Some(&first) = times.first() else {
        return Ok(out);
    };
    on_sample(0, first, &y0)?;
    out.t.push(first);
    out.y.push(y0.clone());

    let dim = y0.len();
    let mut y = y0;
    let mut h: f64 = 0.0;
    for (i, w) in times.windows(2).enumerate() {
        let (t0, t1) = (w[0], w[1]);
        let budget = max_steps.saturating_sub(out.steps).min(u32::MAX as u64) as u32;
        let mut solver = Dop853::from_param(
            Autonomous { inner: system, dim },
            t0,
            t1,
            t1 - t0,
            augmented(&y, t0),
            rtol,
            atol,
            0.9,
            0.0,
            0.333,
            6.0,
            t1 - t0,
            h.min(t1 - t0),
            budget.max(1),
            u32::MAX,
            OutputType::Sparse,
        );
        let stats = solver.integrate().map_err(|e| match e {
            IntegrationError::MaxNumStepReached { x, .. } => Error::StepBudget {
                t: x,
                steps: max_steps.min(u32::MAX as u64) as u32,
            },
            IntegrationError::StepSizeUnderflow { x } | IntegrationError::StiffnessDetected { x } => {
                Error::StepCollapse { t: x, step: h }
            }
        })?;
        out.evaluations += stats.num_eval as u64;
        out.steps += stats.accepted_steps as u64 + stats.rejected_steps as u64;
        let xs = solver.x_out();
        // the last two points give the final accepted step, unless clipped
        if xs.len() >= 3 {
            h = xs[xs.len() - 2] - xs[xs.len() - 3];
        } else if h == 0.0 {
            h = t1 - t0;
        }
        y = solver
            .y_out()
            .last()
            .expect("at least one output")
            .rows(0, dim)
            .into_owned();
        on_sample(i + 1, t1, &y)?;
        out.t.push(t1);
        out.y.push(y.clone());
    }
    Ok(out)
}
