use d4m_core::numerics::kernels;
use std::time::Instant;

fn main() {
    // Typical training shapes: batch x 1024 @ 1024 x 256
    let (m, k, n) = (100, 1024, 256);
    let a = vec![0.5f64; m * k];
    let b = vec![0.25f64; k * n];
    let start = Instant::now();
    let iters = 50;
    let mut sink = 0.0;
    for _ in 0..iters {
        let c = kernels::matmul(&a, &b, m, k, n);
        sink += c[0];
    }
    let dt = start.elapsed().as_secs_f64();
    let flops = 2.0 * (m * k * n * iters) as f64;
    println!("matmul {}x{}x{}: {:.2} GFLOP/s (sink {})", m, k, n, flops / dt / 1e9, sink);
}
