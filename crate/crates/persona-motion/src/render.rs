//! Skeleton rendering to standalone SVG.
//!
//! Single-frame sequences render as a static figure: one `<line>` per bone
//! and one `<circle>` per joint. Multi-frame sequences attach SMIL
//! `<animate>` children to every coordinate attribute (`x1`/`y1`/`x2`/`y2`
//! on lines, `cx`/`cy` on circles) with one keyframe per frame, linear
//! interpolation, and an indefinite loop whose duration is
//! `frames / fps` seconds.
//!
//! Pose coordinates follow the image convention (y grows downward), which
//! matches SVG, so no axis flip is applied. With `fit` enabled (the
//! default) the bounding box of the whole sequence is scaled uniformly
//! into the canvas with a 5% margin; with it disabled, pose coordinates
//! are used as pixel values unchanged. All numbers are written with two
//! decimals, so output is byte-deterministic.

use std::fmt::Write as _;

use crate::skeleton::{JointTopology, PoseSequence, JOINT_COUNT};

#[derive(Debug, Clone)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    pub stroke_width: f64,
    pub joint_radius: f64,
    /// Scale the sequence's bounding box into the canvas.
    pub fit: bool,
    /// Playback rate override; defaults to the sequence's own fps.
    pub fps_override: Option<f64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 512,
            height: 512,
            stroke_width: 2.0,
            joint_radius: 3.0,
            fit: true,
            fps_override: None,
        }
    }
}

const MARGIN_FRACTION: f64 = 0.05;
const BONE_COLOR: &str = "#336699";
const JOINT_COLOR: &str = "#cc3333";

/// Affine pose-to-canvas map `pixel = offset + scale * coordinate`.
struct CanvasMap {
    scale: f64,
    off_x: f64,
    off_y: f64,
}

impl CanvasMap {
    fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.off_x + self.scale * p[0], self.off_y + self.scale * p[1]]
    }
}

fn fit_map(seq: &PoseSequence, cfg: &RenderConfig) -> CanvasMap {
    if !cfg.fit {
        return CanvasMap {
            scale: 1.0,
            off_x: 0.0,
            off_y: 0.0,
        };
    }
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for f in 0..seq.frame_count() {
        for j in 0..JOINT_COUNT {
            let [x, y] = seq.joint(f, j);
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
    }
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let margin_x = w * MARGIN_FRACTION;
    let margin_y = h * MARGIN_FRACTION;
    let span_x = max_x - min_x;
    let span_y = max_y - min_y;
    // Uniform scale so the larger span fills its axis; a degenerate box
    // (single point) just lands on the canvas center.
    let scale_x = if span_x > 0.0 {
        (w - 2.0 * margin_x) / span_x
    } else {
        f64::INFINITY
    };
    let scale_y = if span_y > 0.0 {
        (h - 2.0 * margin_y) / span_y
    } else {
        f64::INFINITY
    };
    let scale = match scale_x.min(scale_y) {
        s if s.is_finite() => s,
        _ => 1.0,
    };
    // Center the scaled box on both axes.
    let off_x = (w - scale * span_x) / 2.0 - scale * min_x;
    let off_y = (h - scale * span_y) / 2.0 - scale * min_y;
    CanvasMap { scale, off_x, off_y }
}

fn fmt2(v: f64) -> String {
    format!("{:.2}", v)
}

fn animate(out: &mut String, attr: &str, values: &[String], dur: &str) {
    let _ = write!(
        out,
        "<animate attributeName=\"{}\" values=\"{}\" dur=\"{}\" repeatCount=\"indefinite\"/>",
        attr,
        values.join(";"),
        dur
    );
}

/// Renders a pose sequence to a complete SVG document.
pub fn render_svg(seq: &PoseSequence, topo: &JointTopology, cfg: &RenderConfig) -> String {
    let map = fit_map(seq, cfg);
    let f_count = seq.frame_count();
    let fps = cfg.fps_override.unwrap_or(seq.fps());
    let dur = format!("{:.3}s", f_count as f64 / fps);
    let animated = f_count > 1;

    // Canvas coordinates per frame, computed once.
    let mut coords = vec![[[0.0f64; 2]; JOINT_COUNT]; f_count];
    for (f, frame) in coords.iter_mut().enumerate() {
        for (j, point) in frame.iter_mut().enumerate() {
            *point = map.apply(seq.joint(f, j));
        }
    }

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">",
        w = cfg.width,
        h = cfg.height
    );

    let _ = write!(
        svg,
        "<g stroke=\"{}\" stroke-width=\"{}\" stroke-linecap=\"round\">",
        BONE_COLOR,
        fmt2(cfg.stroke_width)
    );
    for &(i, j) in topo.bones() {
        let p0 = coords[0][i];
        let p1 = coords[0][j];
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\"",
            fmt2(p0[0]),
            fmt2(p0[1]),
            fmt2(p1[0]),
            fmt2(p1[1])
        );
        if animated {
            svg.push('>');
            let series = |joint: usize, axis: usize| -> Vec<String> {
                coords.iter().map(|f| fmt2(f[joint][axis])).collect()
            };
            animate(&mut svg, "x1", &series(i, 0), &dur);
            animate(&mut svg, "y1", &series(i, 1), &dur);
            animate(&mut svg, "x2", &series(j, 0), &dur);
            animate(&mut svg, "y2", &series(j, 1), &dur);
            svg.push_str("</line>");
        } else {
            svg.push_str("/>");
        }
    }
    svg.push_str("</g>");

    let _ = write!(svg, "<g fill=\"{}\">", JOINT_COLOR);
    let radius = fmt2(cfg.joint_radius);
    for j in 0..JOINT_COUNT {
        let p = coords[0][j];
        let _ = write!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\"",
            fmt2(p[0]),
            fmt2(p[1]),
            radius
        );
        if animated {
            svg.push('>');
            let series = |axis: usize| -> Vec<String> {
                coords.iter().map(|f| fmt2(f[j][axis])).collect()
            };
            animate(&mut svg, "cx", &series(0), &dur);
            animate(&mut svg, "cy", &series(1), &dur);
            svg.push_str("</circle>");
        } else {
            svg.push_str("/>");
        }
    }
    svg.push_str("</g>");
    svg.push_str("</svg>");
    svg.push('\n');
    svg
}
