//! Reverse-mode automatic differentiation over small dense vectors.
//!
//! Every value on the tape is a flat `Vec<f64>`; parameters are read from a
//! borrowed [`ParamStore`] and receive gradients through [`Tape::backward`].

use super::params::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Row { param: ParamId, row: usize },
    MatVec { param: ParamId, x: Var },
    AddBias { x: Var, param: ParamId },
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    Concat(Vec<Var>),
    Mean(Vec<Var>),
    Sum(Vec<Var>),
    Dot(Var, Var),
    Scale(Var, Vec<f64>),
    Bilinear { param: ParamId, l: Var, r: Var },
    NegLogSoftmax { logits: Var, target: usize, probs: Vec<f64> },
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    vals: Vec<Vec<f64>>,
    ops: Vec<Op>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            vals: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, val: Vec<f64>, op: Op) -> Var {
        self.vals.push(val);
        self.ops.push(op);
        Var(self.vals.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.vals[v.0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.vals[v.0].len()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.vals[v.0].len(), 1);
        self.vals[v.0][0]
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn input(&mut self, val: Vec<f64>) -> Var {
        self.push(val, Op::Input)
    }

    /// Row `row` of a 2-D parameter (embedding lookup).
    pub fn row(&mut self, param: ParamId, row: usize) -> Var {
        let t = self.params.get(param);
        let w = t.shape[1];
        let val = t.data[row * w..(row + 1) * w].to_vec();
        self.push(val, Op::Row { param, row })
    }

    /// `W x` for a parameter of shape `[rows, cols]`.
    pub fn matvec(&mut self, param: ParamId, x: Var) -> Var {
        let t = self.params.get(param);
        let (rows, cols) = (t.shape[0], t.shape[1]);
        let xv = &self.vals[x.0];
        assert_eq!(xv.len(), cols, "matvec {:?}: input length", t.name);
        let val = (0..rows)
            .map(|r| {
                t.data[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(xv)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect();
        self.push(val, Op::MatVec { param, x })
    }

    pub fn add_bias(&mut self, x: Var, param: ParamId) -> Var {
        let b = &self.params.get(param).data;
        let xv = &self.vals[x.0];
        assert_eq!(xv.len(), b.len(), "bias length");
        let val = xv.iter().zip(b).map(|(x, b)| x + b).collect();
        self.push(val, Op::AddBias { x, param })
    }

    /// `W x + b`.
    pub fn linear(&mut self, weight: ParamId, bias: ParamId, x: Var) -> Var {
        let wx = self.matvec(weight, x);
        self.add_bias(wx, bias)
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
        assert_eq!(av.len(), bv.len(), "elementwise length mismatch");
        av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.vals[a.0].iter().map(|&x| f(x)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let val = self.zip(a, b, |x, y| x + y);
        self.push(val, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let val = self.zip(a, b, |x, y| x * y);
        self.push(val, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let val = self.map(a, |x| 1.0 - x);
        self.push(val, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let val = self.map(a, sigmoid);
        self.push(val, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let val = self.map(a, f64::tanh);
        self.push(val, Op::Tanh(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let val = self.map(a, elu);
        self.push(val, Op::Elu(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let val = parts
            .iter()
            .flat_map(|p| self.vals[p.0].iter().copied())
            .collect();
        self.push(val, Op::Concat(parts.to_vec()))
    }

    /// Elementwise mean of equal-length vectors.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean of nothing");
        let n = self.vals[parts[0].0].len();
        let mut val = vec![0.0; n];
        for p in parts {
            let pv = &self.vals[p.0];
            assert_eq!(pv.len(), n, "mean length mismatch");
            for (a, b) in val.iter_mut().zip(pv) {
                *a += b;
            }
        }
        let inv = parts.len() as f64;
        val.iter_mut().for_each(|v| *v /= inv);
        self.push(val, Op::Mean(parts.to_vec()))
    }

    /// Elementwise sum of equal-length vectors.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let n = self.vals[parts[0].0].len();
        let mut val = vec![0.0; n];
        for p in parts {
            for (a, b) in val.iter_mut().zip(&self.vals[p.0]) {
                *a += b;
            }
        }
        self.push(val, Op::Sum(parts.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let val: f64 = self.zip(a, b, |x, y| x * y).iter().sum();
        self.push(vec![val], Op::Dot(a, b))
    }

    /// Elementwise product with a constant vector (dropout masks).
    pub fn scale(&mut self, a: Var, factors: Vec<f64>) -> Var {
        assert_eq!(self.vals[a.0].len(), factors.len(), "scale length");
        let val = self.vals[a.0]
            .iter()
            .zip(&factors)
            .map(|(x, f)| x * f)
            .collect();
        self.push(val, Op::Scale(a, factors))
    }

    /// `out[r] = Σ_ab l[a] W[a, b, r] r[b]` for `W` of shape `[dl, dr, R]`.
    pub fn bilinear(&mut self, param: ParamId, l: Var, r: Var) -> Var {
        let t = self.params.get(param);
        let (dl, dr, out) = (t.shape[0], t.shape[1], t.shape[2]);
        let (lv, rv) = (&self.vals[l.0], &self.vals[r.0]);
        assert_eq!((lv.len(), rv.len()), (dl, dr), "bilinear input lengths");
        let mut val = vec![0.0; out];
        for (a, la) in lv.iter().enumerate() {
            for (b, rb) in rv.iter().enumerate() {
                let s = la * rb;
                let base = (a * dr + b) * out;
                for (o, w) in val.iter_mut().zip(&t.data[base..base + out]) {
                    *o += s * w;
                }
            }
        }
        self.push(val, Op::Bilinear { param, l, r })
    }

    /// `-log softmax(logits)[target]`.
    pub fn neg_log_softmax(&mut self, logits: Var, target: usize) -> Var {
        let lv = &self.vals[logits.0];
        assert!(target < lv.len(), "target out of range");
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let val = lse - lv[target];
        let probs = softmax(lv);
        self.push(vec![val], Op::NegLogSoftmax { logits, target, probs })
    }

    /// Accumulates `scale · ∂root/∂θ` into `grads`. `root` must be a scalar.
    pub fn backward(&self, root: Var, scale: f64, grads: &mut Gradients) {
        assert_eq!(self.vals[root.0].len(), 1, "backward from a non-scalar");
        let mut adj: Vec<Vec<f64>> = self.vals.iter().map(|v| vec![0.0; v.len()]).collect();
        adj[root.0][0] = scale;
        for n in (0..=root.0).rev() {
            let g = std::mem::take(&mut adj[n]);
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y = &self.vals[n];
            match &self.ops[n] {
                Op::Input => {}
                Op::Row { param, row } => {
                    let t = self.params.get(*param);
                    let w = t.shape[1];
                    let slot = grads.slot(*param, t.len());
                    for (s, v) in slot[row * w..(row + 1) * w].iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::MatVec { param, x } => {
                    let t = self.params.get(*param);
                    let cols = t.shape[1];
                    let xv = &self.vals[x.0];
                    {
                        let slot = grads.slot(*param, t.len());
                        for (r, gr) in g.iter().enumerate() {
                            if *gr == 0.0 {
                                continue;
                            }
                            for (s, xc) in slot[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                *s += gr * xc;
                            }
                        }
                    }
                    let ax = &mut adj[x.0];
                    for (r, gr) in g.iter().enumerate() {
                        for (a, w) in ax.iter_mut().zip(&t.data[r * cols..(r + 1) * cols]) {
                            *a += gr * w;
                        }
                    }
                }
                Op::AddBias { x, param } => {
                    let len = self.params.get(*param).len();
                    let slot = grads.slot(*param, len);
                    for (s, v) in slot.iter_mut().zip(&g) {
                        *s += v;
                    }
                    add_into(&mut adj[x.0], &g);
                }
                Op::Add(a, b) => {
                    add_into(&mut adj[a.0], &g);
                    add_into(&mut adj[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
                    for i in 0..g.len() {
                        adj[a.0][i] += g[i] * bv[i];
                        adj[b.0][i] += g[i] * av[i];
                    }
                }
                Op::OneMinus(a) => {
                    for (d, v) in adj[a.0].iter_mut().zip(&g) {
                        *d -= v;
                    }
                }
                Op::Sigmoid(a) => {
                    for i in 0..g.len() {
                        adj[a.0][i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(a) => {
                    for i in 0..g.len() {
                        adj[a.0][i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Elu(a) => {
                    let xv = &self.vals[a.0];
                    for i in 0..g.len() {
                        let d = if xv[i] > 0.0 { 1.0 } else { y[i] + 1.0 };
                        adj[a.0][i] += g[i] * d;
                    }
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let len = self.vals[p.0].len();
                        add_into(&mut adj[p.0], &g[at..at + len]);
                        at += len;
                    }
                }
                Op::Mean(parts) => {
                    let inv = 1.0 / parts.len() as f64;
                    for p in parts {
                        for (d, v) in adj[p.0].iter_mut().zip(&g) {
                            *d += v * inv;
                        }
                    }
                }
                Op::Sum(parts) => {
                    for p in parts {
                        add_into(&mut adj[p.0], &g);
                    }
                }
                Op::Dot(a, b) => {
                    let s = g[0];
                    let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
                    for i in 0..av.len() {
                        adj[a.0][i] += s * bv[i];
                        adj[b.0][i] += s * av[i];
                    }
                }
                Op::Scale(a, f) => {
                    for i in 0..g.len() {
                        adj[a.0][i] += g[i] * f[i];
                    }
                }
                Op::Bilinear { param, l, r } => {
                    let t = self.params.get(*param);
                    let (dl, dr, out) = (t.shape[0], t.shape[1], t.shape[2]);
                    let (lv, rv) = (&self.vals[l.0], &self.vals[r.0]);
                    let mut gl = vec![0.0; dl];
                    let mut gr = vec![0.0; dr];
                    {
                        let slot = grads.slot(*param, t.len());
                        for a in 0..dl {
                            for b in 0..dr {
                                let base = (a * dr + b) * out;
                                let w = &t.data[base..base + out];
                                let s = lv[a] * rv[b];
                                let mut wg = 0.0;
                                for o in 0..out {
                                    slot[base + o] += g[o] * s;
                                    wg += w[o] * g[o];
                                }
                                gl[a] += wg * rv[b];
                                gr[b] += wg * lv[a];
                            }
                        }
                    }
                    add_into(&mut adj[l.0], &gl);
                    add_into(&mut adj[r.0], &gr);
                }
                Op::NegLogSoftmax {
                    logits,
                    target,
                    probs,
                } => {
                    let s = g[0];
                    for (i, p) in probs.iter().enumerate() {
                        let onehot = if i == *target { 1.0 } else { 0.0 };
                        adj[logits.0][i] += s * (p - onehot);
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::model::params::{Init, ParamStore};

    fn store() -> (ParamStore, ParamId, ParamId, ParamId) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut s = ParamStore::new();
        let w = s.register("w", &[3, 2], Init::Uniform(0.5), &mut rng).unwrap();
        let b = s.register("b", &[3], Init::Uniform(0.5), &mut rng).unwrap();
        let bl = s.register("bl", &[3, 3, 2], Init::Uniform(0.5), &mut rng).unwrap();
        (s, w, b, bl)
    }

    fn loss(s: &ParamStore, w: ParamId, b: ParamId, bl: ParamId, grads: Option<&mut Gradients>) -> f64 {
        let mut t = Tape::new(s);
        let x = t.input(vec![0.3, -0.7]);
        let h = t.linear(w, b, x);
        let a = t.tanh(h);
        let z = t.sigmoid(h);
        let e = t.elu(h);
        let om = t.one_minus(z);
        let m = t.mul(om, a);
        let c = t.concat(&[m, e]);
        let mean = t.mean(&[m, e, a]);
        let d = t.dot(mean, a);
        let bi = t.bilinear(bl, m, e);
        let nl = t.neg_log_softmax(bi, 1);
        let sc = t.scale(c, vec![2.0, 0.0, 1.0, 1.0, 0.5, 0.0]);
        let picked = t.concat(&[sc]);
        let q = t.neg_log_softmax(picked, 3);
        let total = t.sum(&[d, nl, q]);
        if let Some(g) = grads {
            t.backward(total, 1.0, g);
        }
        t.scalar(total)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (mut s, w, b, bl) = store();
        let mut g = Gradients::for_store(&s);
        loss(&s, w, b, bl, Some(&mut g));
        for id in [w, b, bl] {
            let analytic = g.dense(id, s.get(id).len());
            #[allow(clippy::needless_range_loop)]
            for k in 0..s.get(id).len() {
                let orig = s.get(id).data[k];
                s.get_mut(id).data[k] = orig + 1e-6;
                let up = loss(&s, w, b, bl, None);
                s.get_mut(id).data[k] = orig - 1e-6;
                let down = loss(&s, w, b, bl, None);
                s.get_mut(id).data[k] = orig;
                let fd = (up - down) / 2e-6;
                assert!(
                    (fd - analytic[k]).abs() < 1e-6,
                    "param {id} entry {k}: fd {fd} vs analytic {}",
                    analytic[k]
                );
            }
        }
    }

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}
