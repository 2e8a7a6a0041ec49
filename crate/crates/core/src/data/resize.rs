/// Bilinear resize of an `h×w` image to `th×tw` using pixel-center
/// alignment and edge clamping. Outputs are convex combinations of inputs,
/// so the `[0, 1]` range is preserved.
pub fn resize_slice(src: &[f32], (h, w): (usize, usize), (th, tw): (usize, usize)) -> Vec<f32> {
    assert_eq!(src.len(), h * w);
    assert!(th >= 1 && tw >= 1);
    if (h, w) == (th, tw) {
        return src.to_vec();
    }
    let axis = |n_src: usize, n_dst: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_src as f64 / n_dst as f64;
        (0..n_dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n_src - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let ys = axis(h, th);
    let xs = axis(w, tw);
    let mut out = Vec::with_capacity(th * tw);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
        }
    }
    out
}
