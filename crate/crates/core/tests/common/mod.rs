#![allow(dead_code)]

use ncoadj::data::{NamedColumns, TrialDataset};
use ncoadj::estimators::AdjustmentSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random trial with `p` covariates `X0..` and one NCO `N`; both arms get at
/// least `p + 3` units.
pub fn instance(seed: u64, n: usize, p: usize) -> TrialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_arm = p + 3;
    let mut t: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        t.swap(i, j);
    }
    assert!(n / 2 >= min_arm && n - n / 2 >= min_arm);
    let xs: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let nco: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal) + 1.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let lin: f64 = xs.iter().map(|x| x[i]).sum::<f64>() + 0.7 * nco[i] + t[i] as f64;
            // heteroskedastic noise
            lin + (1.0 + nco[i].abs()) * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let names = (0..p).map(|k| format!("X{k}")).collect();
    TrialDataset::new(
        t,
        NamedColumns::new(names, xs).unwrap(),
        NamedColumns::new(vec!["N".into()], vec![nco]).unwrap(),
        y,
        0.5,
    )
    .unwrap()
}

pub fn full_spec(data: &TrialDataset) -> AdjustmentSpec {
    AdjustmentSpec::ncos(["N"]).with_covariates(data.covariates().names().to_vec())
}

/// Solves the normal equations `(XᵀX) b = Xᵀy` by Gaussian elimination.
pub fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
    x.extend(cols.iter().cloned());
    let k = x.len();
    let mut m = vec![vec![0.0; k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = (0..n).map(|r| x[i][r] * x[j][r]).sum();
        }
        m[i][k] = (0..n).map(|r| x[i][r] * y[r]).sum();
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    (0..k).map(|i| m[i][k] / m[i][i]).collect()
}
