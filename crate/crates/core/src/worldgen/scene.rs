//! Resolution-independent drawings for scene instances.
//!
//! Shape kind, size and count follow the concept, the hue follows the
//! category, and placement and rotation follow the instance's render seed.
//! Coordinates live in a 100x100 view box.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SceneInstance, World};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Diamond,
    Star,
    Hexagon,
}

impl ShapeKind {
    const ALL: [ShapeKind; 6] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Diamond,
        ShapeKind::Star,
        ShapeKind::Hexagon,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneShape {
    pub kind: ShapeKind,
    pub cx: f64,
    pub cy: f64,
    /// Circumscribed radius.
    pub radius: f64,
    pub rotation_deg: f64,
    /// CSS `hsl(...)` fill.
    pub fill: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDescription {
    pub instance_id: usize,
    pub view_box: [f64; 4],
    pub background: String,
    pub shape_kind: ShapeKind,
    /// Hue in degrees shared by every concept of a category.
    pub color_family: u32,
    pub shapes: Vec<SceneShape>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn render_scene<F: Scalar>(instance: &SceneInstance<F>, world: &World<F>) -> Result<SceneDescription> {
    let known = world.instance(instance.instance_id)?;
    if known.concept_id != instance.concept_id || known.render_seed != instance.render_seed {
        return Err(Error::Lookup(format!(
            "instance {} does not belong to this world",
            instance.instance_id
        )));
    }
    let concept = world.concept(instance.concept_id)?;
    let per_category = world.config.concepts_per_category;
    let within = concept.concept_id % per_category;

    let shape_kind = ShapeKind::ALL[within % ShapeKind::ALL.len()];
    let hue = (concept.category_id * 360 / world.config.n_categories.max(1)) as u32;
    let count = 1 + (within / ShapeKind::ALL.len() + within) % 3;
    let saturation = 45 + (within * 37) % 45;
    let base_radius = 9.0 + (within % 4) as f64 * 2.5;

    let mut rng = ChaCha8Rng::seed_from_u64(instance.render_seed);
    let shapes = (0..count)
        .map(|_| {
            let lightness = 40 + rng.random_range(0..=15);
            SceneShape {
                kind: shape_kind,
                cx: round2(rng.random_range(20.0..80.0)),
                cy: round2(rng.random_range(20.0..80.0)),
                radius: round2(base_radius * rng.random_range(0.85..1.15)),
                rotation_deg: round2(rng.random_range(0.0..360.0)),
                fill: format!("hsl({hue}, {saturation}%, {lightness}%)"),
            }
        })
        .collect();

    Ok(SceneDescription {
        instance_id: instance.instance_id,
        view_box: [0.0, 0.0, 100.0, 100.0],
        background: format!("hsl({hue}, 20%, 95%)"),
        shape_kind,
        color_family: hue,
        shapes,
    })
}

fn polygon_points(cx: f64, cy: f64, radius: f64, rotation_deg: f64, vertices: usize, inner: Option<f64>) -> String {
    let steps = if inner.is_some() { vertices * 2 } else { vertices };
    let mut out = String::new();
    for i in 0..steps {
        let r = match inner {
            Some(ratio) if i % 2 == 1 => radius * ratio,
            _ => radius,
        };
        let angle = (rotation_deg + 360.0 * i as f64 / steps as f64 - 90.0).to_radians();
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.2},{:.2}", cx + r * angle.cos(), cy + r * angle.sin());
    }
    out
}

impl SceneDescription {
    pub fn to_svg(&self) -> String {
        let [x, y, w, h] = self.view_box;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{x} {y} {w} {h}\">\
             <rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{}\"/>",
            self.background
        );
        for s in &self.shapes {
            let points = match s.kind {
                ShapeKind::Circle => {
                    let _ = write!(
                        svg,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"{}\"/>",
                        s.cx, s.cy, s.radius, s.fill
                    );
                    continue;
                }
                ShapeKind::Square => polygon_points(s.cx, s.cy, s.radius, s.rotation_deg + 45.0, 4, None),
                ShapeKind::Triangle => polygon_points(s.cx, s.cy, s.radius, s.rotation_deg, 3, None),
                ShapeKind::Diamond => polygon_points(s.cx, s.cy, s.radius, s.rotation_deg, 4, None),
                ShapeKind::Star => polygon_points(s.cx, s.cy, s.radius, s.rotation_deg, 5, Some(0.45)),
                ShapeKind::Hexagon => polygon_points(s.cx, s.cy, s.radius, s.rotation_deg, 6, None),
            };
            let _ = write!(svg, "<polygon points=\"{points}\" fill=\"{}\"/>", s.fill);
        }
        svg.push_str("</svg>");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::{generate_world, WorldConfig};

    fn world() -> World<f64> {
        generate_world(&WorldConfig {
            n_categories: 3,
            concepts_per_category: 4,
            instances_per_concept: 5,
            feature_dim: 4,
            seed: 9,
            ..WorldConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn rendering_is_deterministic() {
        let w = world();
        let inst = &w.instances[7];
        assert_eq!(render_scene(inst, &w).unwrap(), render_scene(inst, &w).unwrap());
    }

    #[test]
    fn same_concept_shares_kind_and_color() {
        let w = world();
        let a = render_scene(&w.instances[10], &w).unwrap();
        let b = render_scene(&w.instances[11], &w).unwrap();
        assert_eq!(w.instances[10].concept_id, w.instances[11].concept_id);
        assert_eq!(a.shape_kind, b.shape_kind);
        assert_eq!(a.color_family, b.color_family);
        assert_ne!(a.shapes, b.shapes);
    }

    #[test]
    fn foreign_instance_is_rejected() {
        let w = world();
        let mut inst = w.instances[0].clone();
        inst.instance_id = 10_000;
        assert!(matches!(render_scene(&inst, &w), Err(Error::Lookup(_))));
        let mut inst = w.instances[0].clone();
        inst.render_seed ^= 1;
        assert!(render_scene(&inst, &w).is_err());
    }

    #[test]
    fn svg_has_one_element_per_shape() {
        let w = world();
        let scene = render_scene(&w.instances[3], &w).unwrap();
        let svg = scene.to_svg();
        let elements = svg.matches("<polygon").count() + svg.matches("<circle").count();
        assert_eq!(elements, scene.shapes.len());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
    }
}
