//! Small self-contained SVG renderers for run artifacts: the
//! localization-error CDF and per-episode probability heatmaps.

use std::fmt::Write;

use crate::model::PredictionGrid;

/// CDF of localization error as an SVG line chart. `points` are
/// (error_m, fraction) pairs sorted by error.
pub fn svg_cdf(points: &[(f64, f64)], title: &str) -> String {
    let (w, h, ml, mb) = (480.0, 320.0, 48.0, 36.0);
    let x_max = points.last().map(|p| p.0).unwrap_or(1.0).max(1.0);
    let px = |x: f64| ml + (x / x_max) * (w - ml - 12.0);
    let py = |y: f64| (h - mb) - y * (h - mb - 24.0);
    let mut path = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, px(x), py(y));
    }
    let mut s = String::new();
    let _ = write!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{tx}" y="16" text-anchor="middle" font-size="13" font-family="sans-serif">{title}</text>
<line x1="{ml}" y1="{yb}" x2="{xr}" y2="{yb}" stroke="black"/>
<line x1="{ml}" y1="{yb}" x2="{ml}" y2="24" stroke="black"/>
<text x="{tx}" y="{h}" dy="-4" text-anchor="middle" font-size="11" font-family="sans-serif">localization error (m)</text>
<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="2"/>
"##,
        tx = w / 2.0,
        yb = h - mb,
        xr = w - 12.0,
    );
    // axis ticks at one-meter intervals (capped to 10 labels)
    let step = (x_max / 10.0).max(1.0).ceil();
    let mut x = 0.0;
    while x <= x_max {
        let _ = write!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10" font-family="sans-serif">{}</text>
"##,
            px(x),
            h - mb + 14.0,
            x
        );
        x += step;
    }
    for frac in [0.0, 0.5, 1.0] {
        let _ = write!(
            s,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10" font-family="sans-serif">{frac}</text>
"##,
            ml - 4.0,
            py(frac) + 3.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Prediction heatmap over the floor raster: cell opacity tracks
/// probability, a red circle marks the 3 m band around the prediction,
/// and a green dot marks the true position.
pub fn svg_heatmap(
    grid: &PredictionGrid,
    raster: &[u8],
    height: usize,
    width: usize,
    meters_per_pixel: f64,
    true_pos: (f64, f64),
) -> String {
    let scale = 4.0; // screen pixels per map pixel
    let (w, h) = (width as f64 * scale, height as f64 * scale);
    let m2px = scale / meters_per_pixel;
    let mut s = String::new();
    let _ = write!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">
"##
    );
    // background raster, one rect per pixel run would be huge; draw rows
    // of identical color as single rects
    for row in 0..height {
        let mut col = 0;
        while col < width {
            let i = (row * width + col) * 3;
            let rgb = (raster[i], raster[i + 1], raster[i + 2]);
            let mut end = col + 1;
            while end < width {
                let j = (row * width + end) * 3;
                if (raster[j], raster[j + 1], raster[j + 2]) != rgb {
                    break;
                }
                end += 1;
            }
            let _ = write!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="rgb({},{},{})"/>
"##,
                col as f64 * scale,
                row as f64 * scale,
                (end - col) as f64 * scale,
                scale,
                rgb.0,
                rgb.1,
                rgb.2
            );
            col = end;
        }
    }
    // probability overlay
    let p_max = grid.probs.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let cell_px = grid.cell_size_m * m2px;
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let p = grid.probs[r * grid.cols + c];
            let alpha = 0.75 * (p / p_max);
            if alpha < 0.01 {
                continue;
            }
            let _ = write!(
                s,
                r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#ff7f0e" fill-opacity="{alpha:.3}"/>
"##,
                c as f64 * cell_px,
                r as f64 * cell_px,
                cell_px,
                cell_px
            );
        }
    }
    let pred = grid.predicted_position();
    let _ = write!(
        s,
        r##"<circle cx="{:.1}" cy="{:.1}" r="{:.1}" fill="none" stroke="red" stroke-width="2"/>
<circle cx="{:.1}" cy="{:.1}" r="4" fill="#2ca02c" stroke="white"/>
</svg>
"##,
        pred.0 * m2px,
        pred.1 * m2px,
        3.0 * m2px,
        true_pos.0 * m2px,
        true_pos.1 * m2px
    );
    s
}
