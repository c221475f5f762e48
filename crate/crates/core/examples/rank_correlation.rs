//! Spearman correlation with tied values, its two-sided p-value and an
//! exact permutation p-value for a short vector.

use mtprompt::metrics::{average_ranks, spearman, spearman_permutation_p};

fn main() -> mtprompt::Result<()> {
    let length = [12.0, 7.0, 7.0, 20.0, 3.0, 15.0, 9.0, 9.0, 11.0, 18.0];
    let bleu = [31.2, 25.0, 26.1, 35.8, 18.4, 30.0, 27.7, 24.9, 29.5, 33.1];
    println!("ranks of length: {:?}", average_ranks(&length));
    let r = spearman(&length, &bleu)?;
    println!("rho {:.4}  p {:.2e}  n {}", r.rho, r.p_value, r.n);

    let short = [1.0, 2.0, 3.0, 4.0, 5.0];
    let noisy = [2.0, 1.0, 4.0, 3.0, 5.0];
    let r = spearman(&short, &noisy)?;
    println!("n=5: rho {:.2}, t-test p {:.3}, permutation p {:.3}", r.rho, r.p_value, spearman_permutation_p(&short, &noisy)?);
    Ok(())
}
