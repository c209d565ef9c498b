//! Random differentiable programs and a central-difference gradient oracle.
//!
//! A program is generated from a seed: the structural choices come from one
//! generator and the leaf values from another, so replaying the same seed with
//! perturbed leaves rebuilds the identical graph.

use gcdt::numerics::{Graph, Pcg32, Tensor, Var};

pub const PRIMITIVES: [&str; 20] = [
    "matmul",
    "matmul_nt",
    "transpose",
    "add",
    "add_row",
    "sub",
    "mul",
    "scale",
    "layer_norm",
    "softmax",
    "causal_mask",
    "tanh",
    "gelu",
    "slice_cols",
    "slice_rows",
    "concat_rows",
    "concat_cols",
    "gather_rows",
    "sum",
    "mean",
];

struct Builder<'a> {
    g: Graph<f64>,
    rng: Pcg32,
    leaves: &'a mut Vec<Tensor<f64>>,
    values: Pcg32,
    cursor: usize,
    leaf_vars: Vec<Var>,
    used: Vec<&'static str>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: usize, cols: usize) -> Var {
        if self.cursor == self.leaves.len() {
            let data = (0..rows * cols)
                .map(|_| self.values.uniform_range(-1.5, 1.5))
                .collect();
            self.leaves.push(Tensor::matrix(rows, cols, data).unwrap());
        }
        let t = self.leaves[self.cursor].clone();
        assert_eq!(t.shape(), &[rows, cols]);
        self.cursor += 1;
        let v = self.g.leaf(t, true);
        self.leaf_vars.push(v);
        v
    }

    fn vector_leaf(&mut self, n: usize) -> Var {
        if self.cursor == self.leaves.len() {
            let data = (0..n)
                .map(|_| self.values.uniform_range(-1.5, 1.5))
                .collect();
            self.leaves.push(Tensor::vector(data).unwrap());
        }
        let t = self.leaves[self.cursor].clone();
        self.cursor += 1;
        let v = self.g.leaf(t, true);
        self.leaf_vars.push(v);
        v
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let s = self.g.shape(v);
        (s[0], s[1])
    }

    fn dim(&mut self) -> usize {
        2 + self.rng.below_usize(3)
    }

    /// Applies primitive `op` to `x`, returning a matrix.
    fn apply(&mut self, op: &'static str, x: Var) -> Var {
        self.used.push(op);
        let (m, n) = self.dims(x);
        match op {
            "matmul" => {
                let k = self.dim();
                let w = self.leaf(n, k);
                self.g.matmul(x, w).unwrap()
            }
            "matmul_nt" => {
                let k = self.dim();
                let w = self.leaf(k, n);
                self.g.matmul_nt(x, w).unwrap()
            }
            "transpose" => self.g.transpose(x).unwrap(),
            "add" => {
                let y = self.leaf(m, n);
                self.g.add(x, y).unwrap()
            }
            "add_row" => {
                let b = self.vector_leaf(n);
                self.g.add(x, b).unwrap()
            }
            "sub" => {
                let y = self.leaf(m, n);
                if self.rng.bernoulli(0.5) {
                    self.g.sub(x, y).unwrap()
                } else {
                    self.g.sub(y, x).unwrap()
                }
            }
            "mul" => {
                if self.rng.bernoulli(0.3) {
                    self.g.mul(x, x).unwrap()
                } else {
                    let y = self.leaf(m, n);
                    self.g.mul(x, y).unwrap()
                }
            }
            "scale" => {
                let c = self.rng.uniform_range(-2.0, 2.0);
                self.g.scale(x, c)
            }
            "layer_norm" => {
                let gain = self.vector_leaf(n);
                let bias = self.vector_leaf(n);
                self.g.layer_norm(x, gain, bias, 1e-5).unwrap()
            }
            "softmax" => self.g.softmax(x),
            "causal_mask" => {
                let sq = if m == n {
                    x
                } else {
                    let w = self.leaf(n, m);
                    self.g.matmul(x, w).unwrap()
                };
                let masked = self.g.causal_mask(sq).unwrap();
                self.g.softmax(masked)
            }
            "tanh" => self.g.tanh(x),
            "gelu" => self.g.gelu(x),
            "slice_cols" => {
                if n < 2 {
                    return x;
                }
                let len = 1 + self.rng.below_usize(n - 1);
                let start = self.rng.below_usize(n - len + 1);
                self.g.slice_cols(x, start, len).unwrap()
            }
            "slice_rows" => {
                if m < 2 {
                    return x;
                }
                let len = 1 + self.rng.below_usize(m - 1);
                let start = self.rng.below_usize(m - len + 1);
                self.g.slice_rows(x, start, len).unwrap()
            }
            "concat_rows" => {
                let r = self.dim();
                let y = self.leaf(r, n);
                self.g.concat_rows(&[x, y, x]).unwrap()
            }
            "concat_cols" => {
                let c = self.dim();
                let y = self.leaf(m, c);
                self.g.concat_cols(&[y, x]).unwrap()
            }
            "gather_rows" => {
                let k = 1 + self.rng.below_usize(m + 2);
                let index: Vec<usize> = (0..k).map(|_| self.rng.below_usize(m)).collect();
                self.g.gather_rows(x, &index).unwrap()
            }
            "sum" | "mean" => {
                // Broadcast the scalar over a fresh column and append it, so
                // the program keeps a matrix and both paths carry gradient.
                let s = if op == "sum" {
                    self.g.sum(x)
                } else {
                    self.g.mean(x)
                };
                let col = self.leaf(m, 1);
                let col = self.g.add(col, s).unwrap();
                self.g.concat_cols(&[x, col]).unwrap()
            }
            other => panic!("unknown primitive {other}"),
        }
    }
}

/// Builds the program's graph and its scalar loss. The final matrix is
/// weighted by a fixed random tensor and summed, so every output entry
/// matters with a distinct weight.
fn build(
    seed: u64,
    first: &'static str,
    leaves: &mut Vec<Tensor<f64>>,
) -> (Graph<f64>, Var, Vec<Var>, Vec<&'static str>) {
    let mut b = Builder {
        g: Graph::new(),
        rng: Pcg32::derive(seed, 1),
        leaves,
        values: Pcg32::derive(seed, 2),
        cursor: 0,
        leaf_vars: Vec::new(),
        used: Vec::new(),
    };
    let (m, n) = (b.dim(), b.dim());
    let mut x = b.leaf(m, n);
    x = b.apply(first, x);
    let extra = 2 + b.rng.below_usize(4);
    for _ in 0..extra {
        let op = PRIMITIVES[b.rng.below_usize(PRIMITIVES.len())];
        x = b.apply(op, x);
    }
    let (m, n) = b.dims(x);
    let mut wr = Pcg32::derive(seed, 3);
    let w = b.g.constant(
        Tensor::matrix(
            m,
            n,
            (0..m * n).map(|_| wr.uniform_range(-1.0, 1.0)).collect(),
        )
        .unwrap(),
    );
    let y = b.g.mul(x, w).unwrap();
    let loss = b.g.sum(y);
    let Builder {
        g, leaf_vars, used, ..
    } = b;
    (g, loss, leaf_vars, used)
}

pub struct CheckResult {
    pub seed: u64,
    pub first: &'static str,
    pub used: Vec<&'static str>,
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Relative error with an absolute floor so that gradients near zero are
/// compared on an absolute scale.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Central differences with step `h` on up to `per_leaf` entries of each leaf.
pub fn check_program(seed: u64, first: &'static str, h: f64, per_leaf: usize) -> CheckResult {
    let mut leaves = Vec::new();
    let (g, loss, leaf_vars, used) = build(seed, first, &mut leaves);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = leaf_vars.iter().map(|&v| grads.wrt(&g, v)).collect();
    let eval = |leaves: &mut Vec<Tensor<f64>>| {
        let (g, loss, _, _) = build(seed, first, leaves);
        g.value(loss).item()
    };
    let mut pick = Pcg32::derive(seed, 4);
    let mut max_rel_err = 0.0f64;
    let mut checked = 0;
    for li in 0..leaves.len() {
        let n = leaves[li].numel();
        let idx: Vec<usize> = if n <= per_leaf {
            (0..n).collect()
        } else {
            (0..per_leaf).map(|_| pick.below_usize(n)).collect()
        };
        for j in idx {
            let orig = leaves[li].data()[j];
            leaves[li].data_mut()[j] = orig + h;
            let up = eval(&mut leaves);
            leaves[li].data_mut()[j] = orig - h;
            let down = eval(&mut leaves);
            leaves[li].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            max_rel_err = max_rel_err.max(rel_err(analytic[li].data()[j], numeric));
            checked += 1;
        }
    }
    CheckResult {
        seed,
        first,
        used,
        max_rel_err,
        checked,
    }
}

/// One program per primitive as its first operation, then `extra` more with
/// random starting primitives.
pub fn run_suite(extra: usize, h: f64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for (i, &op) in PRIMITIVES.iter().enumerate() {
        out.push(check_program(1000 + i as u64, op, h, 8));
    }
    let mut rng = Pcg32::new(77);
    for i in 0..extra {
        let op = PRIMITIVES[rng.below_usize(PRIMITIVES.len())];
        out.push(check_program(5000 + i as u64, op, h, 8));
    }
    out
}
