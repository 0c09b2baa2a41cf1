use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::design::DesignMatrix;
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

/// Thin QR of a tall matrix by modified Gram-Schmidt.
struct Qr {
    q: Array2<f64>,
    r: Array2<f64>,
}

/// Fails with the name of the first column that lies in the span of the
/// ones before it, plus the columns it combines.
fn qr(x: &Array2<f64>, names: &[String]) -> Result<Qr> {
    let (n, p) = x.dim();
    if n < p {
        return Err(Error::RankDeficient(format!(
            "{n} training scans for {p} columns"
        )));
    }
    let mut q = x.clone();
    let mut r = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let orig = x.column(j).dot(&x.column(j)).sqrt();
        for i in 0..j {
            let d = q.column(i).dot(&q.column(j));
            r[[i, j]] = d;
            let qi = q.column(i).to_owned();
            q.column_mut(j).scaled_add(-d, &qi);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm <= RANK_TOL * orig.max(1.0) {
            return Err(collinearity_error(x, names, j));
        }
        r[[j, j]] = norm;
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(Qr { q, r })
}

fn collinearity_error(x: &Array2<f64>, names: &[String], j: usize) -> Error {
    let name = &names[j];
    if j == 0 || x.column(j).iter().all(|&v| v == 0.0) {
        return Error::RankDeficient(format!("column '{name}' is identically zero"));
    }
    // least-squares coefficients of column j on the columns before it
    let prev = x.slice(s![.., ..j]).to_owned();
    let partners = match qr(&prev, &names[..j]) {
        Ok(f) => {
            let c = f.solve(&x.column(j).to_owned().insert_axis(Axis(1)));
            (0..j)
                .filter(|&i| c[[i, 0]].abs() > 1e-8)
                .map(|i| format!("'{}'", names[i]))
                .collect::<Vec<_>>()
        }
        Err(_) => Vec::new(),
    };
    Error::RankDeficient(format!(
        "column '{name}' is collinear with {}",
        if partners.is_empty() {
            "preceding columns".to_string()
        } else {
            partners.join(", ")
        }
    ))
}

impl Qr {
    fn solve(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut b = self.q.t().dot(y);
        let p = self.r.nrows();
        for j in (0..p).rev() {
            for i in j + 1..p {
                let rji = self.r[[j, i]];
                let bi = b.row(i).to_owned();
                b.row_mut(j).scaled_add(-rji, &bi);
            }
            let d = self.r[[j, j]];
            b.row_mut(j).mapv_inplace(|v| v / d);
        }
        b
    }
}

/// Scan ranges of each section, given section lengths.
pub fn section_ranges(sections: &[usize]) -> Vec<std::ops::Range<usize>> {
    let mut start = 0;
    sections
        .iter()
        .map(|&len| {
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Ordinary least-squares coefficients, columns by voxels.
pub fn ols(design: &DesignMatrix, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    let x = design.to_array();
    check_rows(design, y)?;
    Ok(qr(&x, design.names())?.solve(&y.to_owned()))
}

fn check_rows(design: &DesignMatrix, y: ArrayView2<f64>) -> Result<()> {
    if y.nrows() != design.n_scans() {
        return Err(Error::Validation(format!(
            "BOLD has {} scans, design has {}",
            y.nrows(),
            design.n_scans()
        )));
    }
    Ok(())
}

/// Leave-one-section-out r² for every voxel column of `y` (scans by
/// voxels), averaged over folds.
///
/// Held-out r² is taken about the held-out mean. A voxel that is constant
/// within a held-out section scores 0 for that fold.
pub fn cv_r2(design: &DesignMatrix, y: ArrayView2<f64>, sections: &[usize]) -> Result<Array1<f64>> {
    check_rows(design, y)?;
    if sections.len() < 2 {
        return Err(Error::Validation("cross-validation needs at least 2 sections".into()));
    }
    if sections.iter().sum::<usize>() != design.n_scans() || sections.contains(&0) {
        return Err(Error::Validation(format!(
            "section lengths {sections:?} do not partition {} scans",
            design.n_scans()
        )));
    }
    let x = design.to_array();
    let n_vox = y.ncols();
    let mut total = Array1::<f64>::zeros(n_vox);
    let ranges = section_ranges(sections);
    for held in &ranges {
        let train_idx: Vec<usize> = (0..design.n_scans()).filter(|t| !held.contains(t)).collect();
        let xt = x.select(Axis(0), &train_idx);
        let yt = y.select(Axis(0), &train_idx);
        let f = qr(&xt, design.names())?;
        let beta = f.solve(&yt);
        let xh = x.slice(s![held.clone(), ..]);
        let yh = y.slice(s![held.clone(), ..]);
        let pred = xh.dot(&beta);
        for v in 0..n_vox {
            let col = yh.column(v);
            let mean = col.mean().unwrap_or(0.0);
            let ss_tot: f64 = col.iter().map(|&a| (a - mean) * (a - mean)).sum();
            let ss_res: f64 = col
                .iter()
                .zip(pred.column(v))
                .map(|(&a, &p)| (a - p) * (a - p))
                .sum();
            if ss_tot > 0.0 {
                total[v] += 1.0 - ss_res / ss_tot;
            }
        }
    }
    Ok(total / ranges.len() as f64)
}

/// Per-voxel gain in cross-validated r² from appending `column` to the
/// controls. A column already in the span of the controls adds nothing and
/// yields zeros.
pub fn r2_increase(
    controls: &DesignMatrix,
    name: &str,
    column: &[f64],
    y: ArrayView2<f64>,
    sections: &[usize],
) -> Result<Array1<f64>> {
    let base = cv_r2(controls, y, sections)?;
    let full = controls.with_column(name, column.to_vec())?;
    match cv_r2(&full, y, sections) {
        Ok(r) => Ok(r - base),
        Err(Error::RankDeficient(msg)) if !msg.contains(&format!("'{name}' is collinear"))
            && !msg.contains(&format!("'{name}' is identically")) =>
        {
            Err(Error::RankDeficient(msg))
        }
        Err(Error::RankDeficient(msg)) => {
            log::warn!("regressor adds no information: {msg}");
            Ok(Array1::zeros(y.ncols()))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_design(rng: &mut ChaCha8Rng, t: usize, p: usize) -> DesignMatrix {
        let mut d = DesignMatrix::new(t);
        for j in 0..p {
            let col = (0..t).map(|_| StandardNormal.sample(rng)).collect();
            d.add_column(&format!("x{j}"), col).unwrap();
        }
        d
    }

    #[test]
    fn noise_free_voxel_scores_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_design(&mut rng, 90, 3);
        let beta = [0.5, 2.0, -1.0, 0.25];
        let x = d.to_array();
        let y = x.dot(&Array1::from(beta.to_vec())).insert_axis(Axis(1));
        let r = cv_r2(&d, y.view(), &[30, 30, 30]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-9, "{}", r[0]);
        let b = ols(&d, y.view()).unwrap();
        for (i, &bb) in beta.iter().enumerate() {
            assert!((b[[i, 0]] - bb).abs() < 1e-9);
        }
    }

    #[test]
    fn nested_model_never_beats_truth_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = random_design(&mut rng, 60, 2);
        let y = d.to_array().dot(&Array1::from(vec![0.0, 1.0, 1.0])).insert_axis(Axis(1));
        let mut sub = DesignMatrix::new(60);
        sub.add_column("x0", d.column("x0").unwrap().to_vec()).unwrap();
        let full = cv_r2(&d, y.view(), &[20, 20, 20]).unwrap()[0];
        let part = cv_r2(&sub, y.view(), &[20, 20, 20]).unwrap()[0];
        assert!(full >= part);
    }

    #[test]
    fn white_noise_is_not_predictable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = random_design(&mut rng, 180, 3);
        let y = Array2::from_shape_fn((180, 1000), |_| StandardNormal.sample(&mut rng));
        let r = cv_r2(&d, y.view(), &[20; 9]).unwrap();
        assert!(r.mean().unwrap() < 0.01, "{}", r.mean().unwrap());
    }

    #[test]
    fn duplicate_column_names_both_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_design(&mut rng, 40, 2);
        let dup = d.with_column("copy", d.column("x1").unwrap().to_vec()).unwrap();
        let y = Array2::zeros((40, 1));
        match cv_r2(&dup, y.view(), &[20, 20]) {
            Err(Error::RankDeficient(m)) => {
                assert!(m.contains("'copy'") && m.contains("'x1'"), "{m}");
                assert!(!m.contains("'x0'"), "{m}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn uninformative_columns_add_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = random_design(&mut rng, 90, 2);
        let y = Array2::from_shape_fn((90, 5), |_| StandardNormal.sample(&mut rng));
        let same = r2_increase(&d, "s", d.column("x0").unwrap(), y.view(), &[30; 3]).unwrap();
        assert!(same.iter().all(|&v| v.abs() < 1e-12));
        let zero = r2_increase(&d, "s", &[0.0; 90], y.view(), &[30; 3]).unwrap();
        assert!(zero.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn informative_column_increases_r2() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_design(&mut rng, 90, 2);
        let extra: Vec<f64> = (0..90).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = Array2::from_shape_fn((90, 1), |(t, _)| {
            extra[t] + d.column("x0").unwrap()[t] + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let inc = r2_increase(&d, "s", &extra, y.view(), &[30; 3]).unwrap();
        assert!(inc[0] > 0.3, "{}", inc[0]);
    }

    #[test]
    fn fold_validation() {
        let d = DesignMatrix::new(10);
        let y = Array2::zeros((10, 1));
        assert!(cv_r2(&d, y.view(), &[10]).is_err());
        assert!(cv_r2(&d, y.view(), &[4, 4]).is_err());
        assert!(cv_r2(&d, Array2::zeros((9, 1)).view(), &[5, 4]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn noise_free_voxels_score_one(
            seed in 0u64..10_000,
            beta in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_design(&mut rng, 48, 3);
            let y = d.to_array().dot(&Array1::from(beta.clone())).insert_axis(Axis(1));
            let var = y.var(0.0);
            proptest::prop_assume!(var > 1e-6);
            let r = cv_r2(&d, y.view(), &[16, 16, 16]).unwrap();
            proptest::prop_assert!((r[0] - 1.0).abs() < 1e-9, "{}", r[0]);
        }
    }
}
