//! Builds a small expression on the tape, runs the backward pass and
//! compares one gradient entry against a finite difference.

use foldgraph::autodiff::Tape;

fn loss(x: &[f64]) -> foldgraph::Result<(f64, Vec<f64>)> {
    let mut t = Tape::new();
    let a = t.leaf(2, 3, x.to_vec())?;
    let w = t.constant(3, 2, vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5])?;
    let h = t.matmul(a, w)?;
    let h = t.relu(h);
    let p = t.softmax_rows(h);
    let pooled = t.maxpool_rows(p)?;
    let l = t.sum(pooled);
    t.backward(l)?;
    Ok((t.scalar(l)?, t.grad(a).unwrap().to_vec()))
}

fn main() -> foldgraph::Result<()> {
    let x = vec![0.3, -0.2, 0.8, 1.1, 0.4, -0.6];
    let (value, grad) = loss(&x)?;
    println!("loss {value:.6}");
    println!("gradient {grad:.4?}");

    let h = 1e-6;
    let mut up = x.clone();
    up[0] += h;
    let mut down = x.clone();
    down[0] -= h;
    let fd = (loss(&up)?.0 - loss(&down)?.0) / (2.0 * h);
    println!("d/dx0: tape {:.8}, finite difference {fd:.8}", grad[0]);
    Ok(())
}
