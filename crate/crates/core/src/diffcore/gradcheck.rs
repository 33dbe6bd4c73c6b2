use super::tensor::Tensor;

/// Maximum relative error between `analytic` and central differences of `f`
/// at `x`, over all coordinates. The relative error uses
/// `max(1, |analytic|)` as denominator.
pub fn finite_diff_check<F>(f: F, x: &Tensor, analytic: &Tensor, h: f64) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_coords(f, x, analytic, h, &coords)
}

/// [`finite_diff_check`] restricted to the listed coordinates.
pub fn finite_diff_check_coords<F>(
    mut f: F,
    x: &Tensor,
    analytic: &Tensor,
    h: f64,
    coords: &[usize],
) -> f64
where
    F: FnMut(&Tensor) -> f64,
{
    assert!(x.same_shape(analytic), "gradient shape must match the point");
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((numeric - a).abs() / a.abs().max(1.0));
    }
    worst
}
