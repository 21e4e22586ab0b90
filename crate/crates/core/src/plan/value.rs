use crate::vdg::InfluenceMatrix;

use super::RequirementSet;

/// Fraction of `r_i`'s value lost under selection `x`: the strongest ignored
/// positive or selected negative influence on `r_i`.
pub fn penalty(infl: &InfluenceMatrix, x: &[bool], i: usize) -> f64 {
    infl.row(i)
        .iter()
        .zip(x)
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, (&iij, &xj))| {
            let sign = if xj { -1.0 } else { 1.0 };
            (iij.abs() + sign * iij) / 2.0
        })
        .fold(0.0, f64::max)
}

pub fn penalties(infl: &InfluenceMatrix, x: &[bool]) -> Vec<f64> {
    (0..x.len()).map(|i| penalty(infl, x, i)).collect()
}

/// `(1 - p_i) v_i`.
pub fn expected_value(reqs: &RequirementSet, infl: &InfluenceMatrix, x: &[bool], i: usize) -> f64 {
    let v = reqs.values()[i];
    v - penalty(infl, x, i) * v
}

/// Sum of expected values of the selected requirements.
pub fn overall_value(reqs: &RequirementSet, infl: &InfluenceMatrix, x: &[bool]) -> f64 {
    (0..x.len())
        .filter(|&i| x[i])
        .map(|i| expected_value(reqs, infl, x, i))
        .fold(0.0, |a, b| a + b)
}

/// Sum of estimated values of the selected requirements.
pub fn accumulated_value(reqs: &RequirementSet, x: &[bool]) -> f64 {
    reqs.values()
        .iter()
        .zip(x)
        .filter(|(_, &s)| s)
        .map(|(v, _)| v)
        .fold(0.0, |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table2() -> InfluenceMatrix {
        InfluenceMatrix::from_influence(&[
            vec![0.0, 0.5, 0.7, 0.7],
            vec![0.2, 0.0, 0.2, 0.3],
            vec![0.6, 0.5, 0.0, 0.7],
            vec![0.2, 0.2, 0.2, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn worked_penalties_and_values() {
        let infl = table2();
        let x = [true, true, true, false];
        assert_eq!(penalties(&infl, &x)[..3], [0.7, 0.3, 0.7]);
        let reqs = RequirementSet::unnamed(vec![1.0; 4], vec![20.0, 10.0, 50.0, 17.0]).unwrap();
        assert_eq!(expected_value(&reqs, &infl, &x, 0), 6.0);
        assert_eq!(expected_value(&reqs, &infl, &x, 1), 7.0);
        assert_eq!(expected_value(&reqs, &infl, &x, 2), 15.0);
        assert_eq!(overall_value(&reqs, &infl, &x), 28.0);
        assert_eq!(accumulated_value(&reqs, &x), 80.0);
    }

    #[test]
    fn penalty_terms() {
        let all_pos = InfluenceMatrix::from_influence(&[vec![0.0, 0.4], vec![0.9, 0.0]]).unwrap();
        assert_eq!(penalty(&all_pos, &[true, true], 0), 0.0);
        assert_eq!(penalty(&all_pos, &[true, false], 0), 0.4);

        let neg = InfluenceMatrix::from_influence(&[vec![0.0, -0.4], vec![0.0, 0.0]]).unwrap();
        assert_eq!(penalty(&neg, &[true, true], 0), 0.4);
        assert_eq!(penalty(&neg, &[true, false], 0), 0.0);
    }

    #[test]
    fn empty_and_dependency_free() {
        let reqs = RequirementSet::unnamed(vec![1.0; 3], vec![4.0, 5.0, 6.0]).unwrap();
        let zero = InfluenceMatrix::zeros(3);
        assert_eq!(overall_value(&reqs, &table2_like(), &[false; 3]), 0.0);
        assert_eq!(accumulated_value(&reqs, &[false; 3]), 0.0);
        let x = [true, false, true];
        assert_eq!(
            overall_value(&reqs, &zero, &x),
            accumulated_value(&reqs, &x)
        );
        assert_eq!(expected_value(&reqs, &zero, &x, 1), 5.0);
    }

    fn table2_like() -> InfluenceMatrix {
        InfluenceMatrix::from_influence(&[
            vec![0.0, 0.5, -0.7],
            vec![0.2, 0.0, 0.2],
            vec![-0.6, 0.5, 0.0],
        ])
        .unwrap()
    }
}
