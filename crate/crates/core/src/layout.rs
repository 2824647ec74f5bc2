//! Row-major layout helpers shared by dense arrays and the contraction
//! kernels.

/// Row-major strides for `shape`; empty shape yields an empty stride list
/// (a zero-dimensional array has exactly one cell).
pub(crate) fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0usize; shape.len()];
    let mut acc = 1usize;
    for (stride, &card) in strides.iter_mut().zip(shape).rev() {
        *stride = acc;
        acc *= card;
    }
    strides
}

pub(crate) fn cell_count(shape: &[usize]) -> u128 {
    shape.iter().map(|&c| c as u128).product()
}

/// Visit every configuration of `shape` in lexicographic (row-major) order.
/// The zero-dimensional case visits the single empty configuration once.
pub(crate) fn for_each_config(shape: &[usize], mut visit: impl FnMut(&[u32])) {
    if shape.contains(&0) {
        return;
    }
    let mut config = vec![0u32; shape.len()];
    loop {
        visit(&config);
        // odometer increment
        let mut dim = shape.len();
        loop {
            if dim == 0 {
                return;
            }
            dim -= 1;
            config[dim] += 1;
            if (config[dim] as usize) < shape[dim] {
                break;
            }
            config[dim] = 0;
        }
    }
}

pub(crate) fn linear_index(coord: &[u32], strides: &[usize]) -> usize {
    coord
        .iter()
        .zip(strides)
        .map(|(&c, &s)| c as usize * s)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strides_are_row_major() {
        assert_eq!(row_major_strides(&[2, 3, 4]), vec![12, 4, 1]);
        assert_eq!(row_major_strides(&[]), Vec::<usize>::new());
    }

    #[test]
    fn config_enumeration_is_lexicographic() {
        let mut seen = Vec::new();
        for_each_config(&[2, 2], |c| seen.push(c.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
    }

    #[test]
    fn zero_dim_visits_once() {
        let mut count = 0;
        for_each_config(&[], |c| {
            assert!(c.is_empty());
            count += 1;
        });
        assert_eq!(count, 1);
    }
}
