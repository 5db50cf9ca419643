//! Gauss-Legendre rules on intervals, rectangles and triangles.

/// Nodes and weights on [-1, 1] for 1 to 5 points.
pub fn legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    const X1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    const X2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
    const W2: [f64; 2] = [1.0, 1.0];
    const X3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W3: [f64; 3] = [0.555_555_555_555_555_6, 0.888_888_888_888_888_9, 0.555_555_555_555_555_6];
    const X4: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
    const W4: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];
    const X5: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683_1, 0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
    const W5: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    match n {
        1 => (&X1, &W1),
        2 => (&X2, &W2),
        3 => (&X3, &W3),
        4 => (&X4, &W4),
        _ => (&X5, &W5),
    }
}

/// Points and weights on the segment [a, b] (weights sum to its length).
pub fn segment(a: [f64; 2], b: [f64; 2], n: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = legendre(n);
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    x.iter()
        .zip(w)
        .map(|(&t, &wt)| {
            let s = 0.5 * (t + 1.0);
            ([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], 0.5 * wt * len)
        })
        .collect()
}

/// Tensor rule on the rectangle [x0, x1] x [y0, y1].
pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, n: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = legendre(n);
    let mut out = Vec::with_capacity(x.len() * x.len());
    for (&ty, &wy) in x.iter().zip(w) {
        for (&tx, &wx) in x.iter().zip(w) {
            let px = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * tx;
            let py = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * ty;
            out.push(([px, py], 0.25 * wx * wy * (x1 - x0) * (y1 - y0)));
        }
    }
    out
}

/// Collapsed tensor rule on the triangle (a, b, c).
pub fn triangle(a: [f64; 2], b: [f64; 2], c: [f64; 2], n: usize) -> Vec<([f64; 2], f64)> {
    let (x, w) = legendre(n);
    let area2 = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs();
    let mut out = Vec::with_capacity(x.len() * x.len());
    for (&ts, &ws) in x.iter().zip(w) {
        let s = 0.5 * (ts + 1.0);
        for (&tt, &wt) in x.iter().zip(w) {
            let t = 0.5 * (tt + 1.0);
            let p = [
                a[0] + s * ((1.0 - t) * (b[0] - a[0]) + t * (c[0] - a[0])),
                a[1] + s * ((1.0 - t) * (b[1] - a[1]) + t * (c[1] - a[1])),
            ];
            out.push((p, 0.25 * ws * wt * area2 * s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_measure() {
        for n in 1..=5 {
            let s: f64 = legendre(n).1.iter().sum();
            assert!((s - 2.0).abs() < 1e-15);
            let t: f64 = triangle([0.0, 0.0], [2.0, 0.0], [0.0, 1.0], n).iter().map(|p| p.1).sum();
            assert!((t - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn exactness() {
        // ∫_0^1∫_0^1 x^4 y^5 = 1/30 needs three points per direction.
        let r: f64 = rectangle(0.0, 1.0, 0.0, 1.0, 3).iter().map(|(p, w)| w * p[0].powi(4) * p[1].powi(5)).sum();
        assert!((r - 1.0 / 30.0).abs() < 1e-15);
        // ∫ over the unit right triangle of x^2 y = 1/60
        let t: f64 = triangle([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], 3).iter().map(|(p, w)| w * p[0] * p[0] * p[1]).sum();
        assert!((t - 1.0 / 60.0).abs() < 1e-15);
        let s: f64 = segment([0.0, 1.0], [0.0, 3.0], 2).iter().map(|(p, w)| w * p[1] * p[1]).sum();
        assert!((s - 26.0 / 3.0).abs() < 1e-13);
    }
}
