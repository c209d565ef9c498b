//! Compares reverse-mode gradients of a small attention block against central
//! differences in f64.

use gcdt::numerics::{Graph, Pcg32, Tensor, Var};

fn program(g: &mut Graph<f64>, x: &Tensor<f64>, w: &Tensor<f64>) -> (Var, Var, Var) {
    let x = g.leaf(x.clone(), true);
    let w = g.leaf(w.clone(), true);
    let q = g.matmul(x, w).unwrap();
    let scores = g.matmul_nt(q, x).unwrap();
    let masked = g.causal_mask(scores).unwrap();
    let attn = g.softmax(masked);
    let mixed = g.matmul(attn, x).unwrap();
    let act = g.gelu(mixed);
    let loss = g.mean(act);
    (x, w, loss)
}

fn main() {
    let mut rng = Pcg32::new(7);
    let mut rand = |r, c| {
        Tensor::matrix(
            r,
            c,
            (0..r * c).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
        )
        .unwrap()
    };
    let x = rand(4, 3);
    let w = rand(3, 3);
    let mut g = Graph::new();
    let (xv, wv, loss) = program(&mut g, &x, &w);
    let grads = g.backward(loss).unwrap();
    let analytic = [grads.wrt(&g, xv), grads.wrt(&g, wv)];

    let h = 1e-5;
    let value = |x: &Tensor<f64>, w: &Tensor<f64>| {
        let mut g = Graph::new();
        let (_, _, loss) = program(&mut g, x, w);
        g.value(loss).item()
    };
    let mut worst = 0.0f64;
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..grad.numel() {
            let (mut up, mut down) = ([x.clone(), w.clone()], [x.clone(), w.clone()]);
            up[which].data_mut()[i] += h;
            down[which].data_mut()[i] -= h;
            let numeric = (value(&up[0], &up[1]) - value(&down[0], &down[1])) / (2.0 * h);
            let a = grad.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5));
        }
    }
    println!("loss {:.6}", g.value(loss).item());
    println!(
        "largest relative error over {} entries: {worst:.2e}",
        x.numel() + w.numel()
    );
}
