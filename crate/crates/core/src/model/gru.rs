use rand_chacha::ChaCha8Rng;

use crate::error::Result;

use super::params::{Init, ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Gated recurrent cell:
/// `r = σ(W_ir x + W_hr h + b_r)`, `z = σ(W_iz x + W_hz h + b_z)`,
/// `n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))`, `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    w_ir: ParamId,
    w_iz: ParamId,
    w_in: ParamId,
    w_hr: ParamId,
    w_hz: ParamId,
    w_hn: ParamId,
    b_r: ParamId,
    b_z: ParamId,
    b_in: ParamId,
    b_hn: ParamId,
}

const INPUT_WEIGHTS: [&str; 3] = ["w_ir", "w_iz", "w_in"];
const HIDDEN_WEIGHTS: [&str; 3] = ["w_hr", "w_hz", "w_hn"];
const BIASES: [&str; 4] = ["b_r", "b_z", "b_in", "b_hn"];

impl GruCell {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        init: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        for n in INPUT_WEIGHTS {
            store.register(&format!("{prefix}.{n}"), &[hidden, input], Init::Uniform(init), rng)?;
        }
        for n in HIDDEN_WEIGHTS {
            store.register(&format!("{prefix}.{n}"), &[hidden, hidden], Init::Uniform(init), rng)?;
        }
        for n in BIASES {
            store.register(&format!("{prefix}.{n}"), &[hidden], Init::Zeros, rng)?;
        }
        Self::bind(store, prefix, input, hidden)
    }

    pub fn bind(store: &ParamStore, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        let id = |n: &str| store.id(&format!("{prefix}.{n}"));
        let cell = GruCell {
            input,
            hidden,
            w_ir: id("w_ir")?,
            w_iz: id("w_iz")?,
            w_in: id("w_in")?,
            w_hr: id("w_hr")?,
            w_hz: id("w_hz")?,
            w_hn: id("w_hn")?,
            b_r: id("b_r")?,
            b_z: id("b_z")?,
            b_in: id("b_in")?,
            b_hn: id("b_hn")?,
        };
        for w in [cell.w_ir, cell.w_iz, cell.w_in] {
            store.expect_shape(w, &[hidden, input])?;
        }
        for w in [cell.w_hr, cell.w_hz, cell.w_hn] {
            store.expect_shape(w, &[hidden, hidden])?;
        }
        for b in [cell.b_r, cell.b_z, cell.b_in, cell.b_hn] {
            store.expect_shape(b, &[hidden])?;
        }
        Ok(cell)
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var) -> Var {
        let gate = |tape: &mut Tape, wi, wh, b| {
            let a = tape.matvec(wi, x);
            let c = tape.matvec(wh, h);
            let s = tape.add(a, c);
            let s = tape.add_bias(s, b);
            tape.sigmoid(s)
        };
        let r = gate(tape, self.w_ir, self.w_hr, self.b_r);
        let z = gate(tape, self.w_iz, self.w_hz, self.b_z);
        let xn = tape.linear(self.w_in, self.b_in, x);
        let hn = tape.linear(self.w_hn, self.b_hn, h);
        let rh = tape.mul(r, hn);
        let n = tape.add(xn, rh);
        let n = tape.tanh(n);
        let keep = tape.one_minus(z);
        let a = tape.mul(keep, n);
        let b = tape.mul(z, h);
        tape.add(a, b)
    }

    /// Runs over `xs` from `h0`, returning every state in input order.
    pub fn run(&self, tape: &mut Tape, xs: &[Var], h0: Var, reverse: bool) -> Vec<Var> {
        let mut out = vec![h0; xs.len()];
        let mut h = h0;
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..xs.len()).rev())
        } else {
            Box::new(0..xs.len())
        };
        for i in order {
            h = self.step(tape, xs[i], h);
            out[i] = h;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    #[test]
    fn zero_weights_halve_the_state() {
        // With all parameters zero: z = 0.5, n = 0, so h' = h / 2.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = ParamStore::new();
        let cell = GruCell::register(&mut s, "g", 2, 3, 0.0, &mut rng).unwrap();
        let mut t = Tape::new(&s);
        let x = t.input(vec![1.0, -1.0]);
        let h = t.input(vec![0.4, -0.2, 1.0]);
        let h1 = cell.step(&mut t, x, h);
        assert_eq!(t.value(h1), &[0.2, -0.1, 0.5]);
    }
}
