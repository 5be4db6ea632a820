//! Log-likelihood-ratio cost and its minimum over monotone recalibrations.

use crate::error::{Error, Result};

/// `log2(1 + e^x)`, stable for large |x| and exact at the infinities.
fn log2_one_plus_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 30.0 {
        (x + (-x).exp().ln_1p()) / std::f64::consts::LN_2
    } else {
        x.exp().ln_1p() / std::f64::consts::LN_2
    }
}

/// `Cllr = ½·mean_gen log2(1+e^-llr) + ½·mean_imp log2(1+e^llr)`.
pub fn cllr(genuine_llr: &[f64], impostor_llr: &[f64]) -> Result<f64> {
    if genuine_llr.is_empty() || impostor_llr.is_empty() {
        return Err(Error::data("cllr needs genuine and impostor scores"));
    }
    let g: f64 = genuine_llr.iter().map(|&l| log2_one_plus_exp(-l)).sum::<f64>() / genuine_llr.len() as f64;
    let i: f64 = impostor_llr.iter().map(|&l| log2_one_plus_exp(l)).sum::<f64>() / impostor_llr.len() as f64;
    Ok(0.5 * g + 0.5 * i)
}

/// Pool-adjacent-violators on 0/1 targets sorted by score, with tied scores
/// pooled up front. Returns the fitted target probability per input, in the
/// input order of `scores`.
pub fn pav_posteriors(scores: &[f64], is_target: &[bool]) -> Vec<f64> {
    assert_eq!(scores.len(), is_target.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // blocks of (target count, total count, member count in `order`)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut tgt = 0.0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if is_target[order[j]] {
                tgt += 1.0;
            }
            j += 1;
        }
        blocks.push((tgt, (j - i) as f64, j - i));
        while blocks.len() >= 2 {
            let n = blocks.len();
            let (t1, c1, m1) = blocks[n - 2];
            let (t2, c2, m2) = blocks[n - 1];
            if t1 / c1 >= t2 / c2 {
                blocks.truncate(n - 2);
                blocks.push((t1 + t2, c1 + c2, m1 + m2));
            } else {
                break;
            }
        }
        i = j;
    }

    let mut out = vec![0.0; scores.len()];
    let mut pos = 0;
    for (t, c, m) in blocks {
        for &idx in &order[pos..pos + m] {
            out[idx] = t / c;
        }
        pos += m;
    }
    out
}

/// Minimum Cllr: the cost after the optimal monotone recalibration found by
/// PAV, with the data's own class proportions removed from the posteriors.
pub fn cllr_min(genuine_llr: &[f64], impostor_llr: &[f64]) -> Result<f64> {
    if genuine_llr.is_empty() || impostor_llr.is_empty() {
        return Err(Error::data("cllr needs genuine and impostor scores"));
    }
    let scores: Vec<f64> = genuine_llr.iter().chain(impostor_llr).copied().collect();
    let labels: Vec<bool> = (0..scores.len()).map(|i| i < genuine_llr.len()).collect();
    let post = pav_posteriors(&scores, &labels);
    let prior_log_odds = (genuine_llr.len() as f64 / impostor_llr.len() as f64).ln();
    let to_llr = |p: f64| {
        if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else {
            (p / (1.0 - p)).ln() - prior_log_odds
        }
    };
    let (gen, imp) = post.split_at(genuine_llr.len());
    let g: Vec<f64> = gen.iter().map(|&p| to_llr(p)).collect();
    let i: Vec<f64> = imp.iter().map(|&p| to_llr(p)).collect();
    cllr(&g, &i)
}

/// `(cllr, cllr_min)`.
pub fn compute_cllr(genuine_llr: &[f64], impostor_llr: &[f64]) -> Result<(f64, f64)> {
    Ok((cllr(genuine_llr, impostor_llr)?, cllr_min(genuine_llr, impostor_llr)?))
}
