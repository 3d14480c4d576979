//! Layer handles over the flat parameter vector.

use rand::Rng;

use crate::autodiff::{ParamId, ParamLayout, Tape, Var};
use crate::scalar::Scalar;

/// Weight scale of the uniform initializer.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(layout: &mut ParamLayout, name: &str, inputs: usize, outputs: usize) -> Self {
        let w = layout.add(format!("{name}.weight"), outputs, inputs);
        let b = layout.add(format!("{name}.bias"), outputs, 1);
        Self { w, b }
    }

    pub fn inputs(&self) -> usize {
        self.w.cols
    }

    pub fn outputs(&self) -> usize {
        self.w.rows
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        tape.affine(self.w, Some(self.b), &[(0, x)])
    }

    /// Uniform weights, zero bias.
    pub fn init<T: Scalar, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        uniform(&mut params[self.w.range()], rng);
        params[self.b.range()].iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn zero<T: Scalar>(&self, params: &mut [T]) {
        params[self.w.range()].iter_mut().for_each(|v| *v = T::zero());
        params[self.b.range()].iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Recurrent state of a gated cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// Gated recurrent cell with input/forget/output gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmCell {
    pub gates: Linear,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(layout: &mut ParamLayout, name: &str, input: usize, hidden: usize) -> Self {
        let gates = Linear::new(layout, name, input + hidden, 4 * hidden);
        Self { gates, input, hidden }
    }

    /// One step; `state = None` is the zero initial state.
    pub fn step<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, state: Option<CellState>) -> CellState {
        let z = match state {
            Some(s) => tape.affine(self.gates.w, Some(self.gates.b), &[(0, x), (self.input, s.h)]),
            None => tape.affine(self.gates.w, Some(self.gates.b), &[(0, x)]),
        };
        let hc = tape.lstm(z, state.map(|s| s.c));
        CellState { h: tape.slice(hc, 0, self.hidden), c: tape.slice(hc, self.hidden, self.hidden) }
    }

    /// Runs the cell over a sequence from the zero state.
    pub fn run<T: Scalar>(&self, tape: &mut Tape<'_, T>, xs: &[Var]) -> Option<CellState> {
        xs.iter().fold(None, |s, &x| Some(self.step(tape, x, s)))
    }

    pub fn init<T: Scalar, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        self.gates.init(params, rng);
    }
}

pub fn uniform<T: Scalar, R: Rng>(out: &mut [T], rng: &mut R) {
    for v in out {
        *v = T::lit(rng.gen_range(-INIT_SCALE..INIT_SCALE));
    }
}
