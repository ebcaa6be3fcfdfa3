//! Biased small-probability estimates `p̃ = (x + k)/(N + k)` and the
//! relative-variance bound that keeps them usable before any failure is seen.
use mlmc_composite::failure::biased_p;

fn main() {
    println!(
        "{:>5} {:>3} {:>3} {:>10} {:>10}",
        "N", "x", "k", "p_tilde", "bound"
    );
    for n in [10, 50, 500] {
        for x in [0, 1, 5] {
            for k in [1, 2, 5] {
                let b = biased_p(x, n, k);
                println!(
                    "{n:>5} {x:>3} {k:>3} {:>10.4e} {:>10.4}",
                    b.p_tilde, b.relative_variance_bound
                );
            }
        }
    }
}
