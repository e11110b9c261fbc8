//! Runs the voxel codecs, the zero-variation graph construction and the
//! smoothing check, printing one certificate per case.

use foldgraph::graph::graph_tv;
use foldgraph::theory::{
    certify_suite, certify_thm1, random_unit_cloud, solve_zero_tv, z_shape_signals, Proxy, SuiteConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> foldgraph::Result<()> {
    for cert in certify_suite(&SuiteConfig::default())? {
        println!("{cert}");
    }

    // corner proxies sit farther from the points they stand for
    let s = random_unit_cloud(200, &mut ChaCha8Rng::seed_from_u64(3));
    for proxy in [Proxy::Center, Proxy::Corner] {
        println!("{proxy:?}: {}", certify_thm1(&s, 27, proxy)?);
    }

    let (x1, x2) = z_shape_signals();
    let a = solve_zero_tv(&x1, &x2)?;
    println!("Z shape: tv {:.1e} and {:.1e} on a non-identity graph", graph_tv(&a, &x1)?, graph_tv(&a, &x2)?);
    Ok(())
}
