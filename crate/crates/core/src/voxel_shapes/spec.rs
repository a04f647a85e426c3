use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::PartLabel;
use super::sdf::Part;
use crate::{Error, Result};

/// Snapping unit for part boundaries: two voxels at the default resolution.
pub const PART_UNIT: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Chair,
    Table,
}

impl Category {
    pub fn noun(self) -> &'static str {
        match self {
            Category::Chair => "chair",
            Category::Table => "table",
        }
    }

    /// The horizontal slab a person sits on or puts things on.
    pub fn surface(self) -> &'static str {
        match self {
            Category::Chair => "seat",
            Category::Table => "top",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegStyle {
    /// Square-section legs.
    Straight,
    /// Legs joined by low cross bars.
    Cross,
    /// Round turned posts.
    Post,
}

/// Parametric furniture description in normalized object space (the unit cube, y up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub category: Category,
    /// Seat or top extent along x.
    pub seat_width: f64,
    /// Seat or top extent along z.
    pub seat_depth: f64,
    /// Height of the upper surface of the seat or top.
    pub seat_height: f64,
    pub seat_thickness: f64,
    pub round_seat: bool,
    pub leg_count: u8,
    pub leg_style: LegStyle,
    pub back: bool,
    pub back_height: f64,
    pub armrests: bool,
    pub slat_count: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrKey {
    Category,
    Width,
    Height,
    Thickness,
    TopShape,
    LegCount,
    LegStyle,
    Back,
    Armrests,
    Slats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrValue {
    Chair,
    Table,
    Wide,
    Narrow,
    High,
    Low,
    Thick,
    Thin,
    Round,
    Square,
    Legs(u8),
    Straight,
    Cross,
    Post,
    NoBack,
    ShortBack,
    TallBack,
    Armrests,
    Armless,
    Slats(u8),
}

/// Discrete, caption-level description of a shape.
pub type Attributes = BTreeMap<AttrKey, AttrValue>;

const CHAIR_NARROW: [f64; 2] = [0.5, 0.625];
const CHAIR_WIDE: [f64; 2] = [0.75, 0.875];
const CHAIR_DEPTH: [f64; 2] = [0.5, 0.625];
const CHAIR_LOW: [f64; 2] = [0.375, 0.4375];
const CHAIR_HIGH: [f64; 2] = [0.5, 0.5625];
const TABLE_NARROW: [f64; 2] = [0.625, 0.75];
const TABLE_WIDE: [f64; 1] = [0.875];
const TABLE_DEPTH: [f64; 3] = [0.5, 0.625, 0.75];
const TABLE_LOW: [f64; 2] = [0.375, 0.4375];
const TABLE_HIGH: [f64; 2] = [0.625, 0.6875];
const THIN: f64 = 0.0625;
const THICK: f64 = 0.125;
const SHORT_BACK: [f64; 2] = [0.1875, 0.25];
const TALL_BACK: f64 = 0.375;

fn pick<R: Rng + ?Sized>(rng: &mut R, options: &[f64]) -> f64 {
    *options.choose(rng).expect("non-empty option list")
}

impl ShapeSpec {
    /// Draws a random spec of the given category.
    pub fn sample<R: Rng + ?Sized>(category: Category, rng: &mut R) -> Self {
        let wide = rng.gen_bool(0.5);
        let high = rng.gen_bool(0.5);
        let thick = rng.gen_bool(0.5);
        let leg_count = match rng.gen_range(0..100) {
            0..=49 => 4,
            50..=74 => 3,
            _ => 1,
        };
        let leg_style = match rng.gen_range(0..100) {
            0..=39 => LegStyle::Straight,
            40..=74 => LegStyle::Post,
            _ => LegStyle::Cross,
        };
        match category {
            Category::Chair => {
                let back_roll = rng.gen_range(0..100);
                let (back, back_height) = match back_roll {
                    0..=14 => (false, 0.0),
                    15..=74 => (true, pick(rng, &SHORT_BACK)),
                    _ => (true, TALL_BACK),
                };
                let slat_count = if back {
                    match rng.gen_range(0..100) {
                        0..=59 => 0,
                        60..=79 => 2,
                        _ => 3,
                    }
                } else {
                    0
                };
                ShapeSpec {
                    category,
                    seat_width: pick(rng, if wide { &CHAIR_WIDE } else { &CHAIR_NARROW }),
                    seat_depth: pick(rng, &CHAIR_DEPTH),
                    seat_height: pick(rng, if high { &CHAIR_HIGH } else { &CHAIR_LOW }),
                    seat_thickness: if thick { THICK } else { THIN },
                    round_seat: false,
                    leg_count,
                    leg_style,
                    back,
                    back_height,
                    armrests: rng.gen_range(0..100) < 25,
                    slat_count,
                }
            }
            Category::Table => ShapeSpec {
                category,
                seat_width: if wide {
                    pick(rng, &TABLE_WIDE)
                } else {
                    pick(rng, &TABLE_NARROW)
                },
                seat_depth: pick(rng, &TABLE_DEPTH),
                seat_height: pick(rng, if high { &TABLE_HIGH } else { &TABLE_LOW }),
                seat_thickness: if thick { THICK } else { THIN },
                round_seat: rng.gen_bool(0.5),
                leg_count,
                leg_style,
                back: false,
                back_height: 0.0,
                armrests: false,
                slat_count: 0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        let dims = [self.seat_width, self.seat_depth, self.seat_height, self.seat_thickness];
        if dims.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return bad("seat dimensions must be positive");
        }
        if self.seat_width > 1.0 || self.seat_depth > 1.0 {
            return bad("seat does not fit in the unit cube");
        }
        if self.seat_height - self.seat_thickness < PART_UNIT {
            return bad("no room for legs under the seat");
        }
        if !matches!(self.leg_count, 1 | 3 | 4) {
            return bad("leg count must be 1, 3 or 4");
        }
        if self.back && (self.back_height <= PART_UNIT || self.seat_height + self.back_height > 1.0) {
            return bad("back height out of range");
        }
        if !self.back && self.slat_count > 0 {
            return bad("slats need a back");
        }
        if self.slat_count > 4 {
            return bad("at most 4 slats");
        }
        if self.category == Category::Table && (self.back || self.armrests) {
            return bad("tables have no back or armrests");
        }
        if self.armrests && self.seat_height + 4.0 * PART_UNIT > 1.0 {
            return bad("armrests do not fit");
        }
        Ok(())
    }

    /// Caption-level attributes, the ground truth captions are templated from.
    pub fn attributes(&self) -> Attributes {
        use AttrValue as V;
        let mut a = Attributes::new();
        let (wide, high) = match self.category {
            Category::Chair => (self.seat_width >= 0.7, self.seat_height >= 0.5),
            Category::Table => (self.seat_width >= 0.8, self.seat_height >= 0.55),
        };
        a.insert(AttrKey::Category, match self.category {
            Category::Chair => V::Chair,
            Category::Table => V::Table,
        });
        a.insert(AttrKey::Width, if wide { V::Wide } else { V::Narrow });
        a.insert(AttrKey::Height, if high { V::High } else { V::Low });
        a.insert(
            AttrKey::Thickness,
            if self.seat_thickness >= 0.09 { V::Thick } else { V::Thin },
        );
        a.insert(AttrKey::LegCount, V::Legs(self.leg_count));
        a.insert(AttrKey::LegStyle, match self.leg_style {
            LegStyle::Straight => V::Straight,
            LegStyle::Cross => V::Cross,
            LegStyle::Post => V::Post,
        });
        match self.category {
            Category::Table => {
                a.insert(AttrKey::TopShape, if self.round_seat { V::Round } else { V::Square });
            }
            Category::Chair => {
                let back = if !self.back {
                    V::NoBack
                } else if self.back_height >= 0.3 {
                    V::TallBack
                } else {
                    V::ShortBack
                };
                a.insert(AttrKey::Back, back);
                a.insert(AttrKey::Armrests, if self.armrests { V::Armrests } else { V::Armless });
                if self.back {
                    a.insert(AttrKey::Slats, V::Slats(self.slat_count));
                }
            }
        }
        a
    }

    /// The primitives the shape is composed of.
    pub fn parts(&self) -> Result<Vec<Part>> {
        self.validate()?;
        let u = PART_UNIT;
        let (w, d) = (self.seat_width, self.seat_depth);
        let (x0, x1) = (0.5 - w / 2.0, 0.5 + w / 2.0);
        let (z0, z1) = (0.5 - d / 2.0, 0.5 + d / 2.0);
        let top = self.seat_height;
        let bottom = top - self.seat_thickness;
        let surface_label = match self.category {
            Category::Chair => PartLabel::Seat,
            Category::Table => PartLabel::Top,
        };
        let mut parts = Vec::new();

        // Leg footprint: the seat rectangle, or a square inscribed in a round top.
        let (fx0, fx1, fz0, fz1) = if self.round_seat {
            let radius = w.min(d) / 2.0;
            parts.push(Part::cylinder(surface_label, [0.5, 0.5], radius, bottom, top));
            let half = ((radius * 0.7) / u).floor() * u;
            (0.5 - half, 0.5 + half, 0.5 - half, 0.5 + half)
        } else {
            parts.push(Part::cuboid(surface_label, [x0, bottom, z0], [x1, top, z1]));
            (x0, x1, z0, z1)
        };

        let leg = |parts: &mut Vec<Part>, lx: f64, lz: f64, size: f64| {
            // (lx, lz) is the min corner of the leg's square footprint.
            match self.leg_style {
                LegStyle::Post => parts.push(Part::cylinder(
                    PartLabel::Leg,
                    [lx + size / 2.0, lz + size / 2.0],
                    size * 0.8,
                    0.0,
                    bottom,
                )),
                _ => parts.push(Part::cuboid(
                    PartLabel::Leg,
                    [lx, 0.0, lz],
                    [lx + size, bottom, lz + size],
                )),
            }
        };
        let bar_y = (2.0 * u, 3.0 * u);
        match self.leg_count {
            4 => {
                for &(lx, lz) in &[(fx0, fz0), (fx1 - u, fz0), (fx0, fz1 - u), (fx1 - u, fz1 - u)] {
                    leg(&mut parts, lx, lz, u);
                }
                if self.leg_style == LegStyle::Cross {
                    for &lx in &[fx0, fx1 - u] {
                        parts.push(Part::cuboid(
                            PartLabel::Stretcher,
                            [lx, bar_y.0, fz0],
                            [lx + u, bar_y.1, fz1],
                        ));
                    }
                    parts.push(Part::cuboid(
                        PartLabel::Stretcher,
                        [fx0, bar_y.0, 0.5 - u / 2.0],
                        [fx1, bar_y.1, 0.5 + u / 2.0],
                    ));
                }
            }
            3 => {
                leg(&mut parts, fx0, fz1 - u, u);
                leg(&mut parts, fx1 - u, fz1 - u, u);
                leg(&mut parts, 0.5 - u / 2.0, fz0, u);
                if self.leg_style == LegStyle::Cross {
                    parts.push(Part::cuboid(
                        PartLabel::Stretcher,
                        [fx0, bar_y.0, fz1 - u],
                        [fx1, bar_y.1, fz1],
                    ));
                    parts.push(Part::cuboid(
                        PartLabel::Stretcher,
                        [0.5 - u / 2.0, bar_y.0, fz0],
                        [0.5 + u / 2.0, bar_y.1, fz1],
                    ));
                }
            }
            _ => {
                leg(&mut parts, 0.5 - u, 0.5 - u, 2.0 * u);
                match self.leg_style {
                    LegStyle::Straight => parts.push(Part::cuboid(
                        PartLabel::Leg,
                        [0.5 - 3.0 * u, 0.0, 0.5 - 3.0 * u],
                        [0.5 + 3.0 * u, u, 0.5 + 3.0 * u],
                    )),
                    LegStyle::Post => {
                        parts.push(Part::cylinder(PartLabel::Leg, [0.5, 0.5], 3.0 * u, 0.0, u))
                    }
                    LegStyle::Cross => {
                        parts.push(Part::cuboid(
                            PartLabel::Stretcher,
                            [fx0, 0.0, 0.5 - u / 2.0],
                            [fx1, u, 0.5 + u / 2.0],
                        ));
                        parts.push(Part::cuboid(
                            PartLabel::Stretcher,
                            [0.5 - u / 2.0, 0.0, fz0],
                            [0.5 + u / 2.0, u, fz1],
                        ));
                    }
                }
            }
        }

        if self.back {
            let back_top = top + self.back_height;
            if self.slat_count == 0 {
                parts.push(Part::cuboid(PartLabel::Back, [x0, top, z0], [x1, back_top, z0 + u]));
            } else {
                parts.push(Part::cuboid(PartLabel::Back, [x0, top, z0], [x0 + u, back_top, z0 + u]));
                parts.push(Part::cuboid(PartLabel::Back, [x1 - u, top, z0], [x1, back_top, z0 + u]));
                parts.push(Part::cuboid(
                    PartLabel::Back,
                    [x0, back_top - u, z0],
                    [x1, back_top, z0 + u],
                ));
                let n = f64::from(self.slat_count);
                let half_voxel = 1.0 / 32.0;
                for j in 0..self.slat_count {
                    let center = x0 + (f64::from(j) + 1.0) * w / (n + 1.0);
                    let left = ((center - u / 2.0) / half_voxel).round() * half_voxel;
                    parts.push(Part::cuboid(
                        PartLabel::Slat,
                        [left, top, z0],
                        [left + u, back_top - u, z0 + u],
                    ));
                }
            }
        }

        if self.armrests {
            for &ax in &[x0, x1 - u] {
                parts.push(Part::cuboid(
                    PartLabel::Armrest,
                    [ax, top + 3.0 * u, z0],
                    [ax + u, top + 4.0 * u, z1],
                ));
                parts.push(Part::cuboid(
                    PartLabel::Armrest,
                    [ax, top, z1 - u],
                    [ax + u, top + 3.0 * u, z1],
                ));
            }
        }
        Ok(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_specs_validate_and_fit_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..400 {
            let cat = if i % 2 == 0 { Category::Chair } else { Category::Table };
            let spec = ShapeSpec::sample(cat, &mut rng);
            spec.validate().unwrap();
            for part in spec.parts().unwrap() {
                if let super::super::sdf::Primitive::Box { min, max } = part.primitive {
                    assert!(min.iter().all(|v| *v >= 0.0) && max.iter().all(|v| *v <= 1.0));
                }
            }
        }
    }

    #[test]
    fn invalid_leg_count_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut spec = ShapeSpec::sample(Category::Chair, &mut rng);
        spec.leg_count = 2;
        assert!(spec.parts().is_err());
    }

    #[test]
    fn attributes_cover_category_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chair = ShapeSpec::sample(Category::Chair, &mut rng);
        let a = chair.attributes();
        assert!(a.contains_key(&AttrKey::Armrests) && a.contains_key(&AttrKey::Back));
        assert!(!a.contains_key(&AttrKey::TopShape));
        let table = ShapeSpec::sample(Category::Table, &mut rng);
        let a = table.attributes();
        assert!(a.contains_key(&AttrKey::TopShape) && !a.contains_key(&AttrKey::Back));
    }
}
