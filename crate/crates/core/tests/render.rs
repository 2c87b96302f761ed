use pointexplainer::render::{moving_average, render_svg};

const GOLDEN: &str = r##"<svg xmlns="http://www.w3.org/2000/svg" width="512" height="512" viewBox="0 0 512 512">
<title>a &lt;b&gt;</title>
<rect width="100%" height="100%" fill="#ffffff"/>
<g fill="none" stroke-width="2" stroke-linecap="round" stroke-linejoin="round">
<polyline stroke="#b40426" points="16.00,496.00 256.00,496.00"/>
<polyline stroke="#3b4cc0" points="256.00,496.00 496.00,16.00"/>
</g>
</svg>
"##;

#[test]
fn three_point_golden() {
    let svg = render_svg(&[(0.0, 0.0), (1.0, 0.0), (2.0, 2.0)], &[1.0, -1.0, 0.0], 1, "a <b>").unwrap();
    assert_eq!(svg, GOLDEN);
}

#[test]
fn rejects_bad_inputs() {
    assert!(render_svg(&[(0.0, 0.0)], &[0.0], 1, "").is_err());
    assert!(render_svg(&[(0.0, 0.0), (1.0, 1.0)], &[0.0], 1, "").is_err());
}

#[test]
fn smoothing_preserves_sum_for_interior_impulse() {
    let mut v = vec![0.0; 41];
    v[20] = 15.0;
    let m = moving_average(&v, 15);
    assert!((m.iter().sum::<f64>() - 15.0).abs() < 1e-12);
    assert_eq!(m.iter().filter(|&&x| x > 0.0).count(), 15);
}
