//! Object classes 1 to 20.
//!
//! Classes 1 to 9 are machine screws (length, thread); 10 to 20 are everyday
//! spheres and capsules. Threads are modelled by the shaft radius only:
//! major radius minus 0.35 pitch.

use super::shapes::Shape;

pub const TWO_OBJECTS: u8 = 21;
pub const PLANE: u8 = 22;
pub const NUM_CLASSES: usize = 22;

const INCH: f64 = 25.4;

#[derive(Clone, Copy, Debug)]
struct Thread {
    name: &'static str,
    major_diameter: f64,
    tpi: f64,
    head_diameter: f64,
    head_height: f64,
}

const N4_40: Thread = Thread {
    name: "4-40",
    major_diameter: 0.112 * INCH,
    tpi: 40.0,
    head_diameter: 5.5,
    head_height: 2.0,
};
const N4_48: Thread = Thread {
    name: "4-48",
    tpi: 48.0,
    ..N4_40
};
const N10_24: Thread = Thread {
    name: "10-24",
    major_diameter: 0.190 * INCH,
    tpi: 24.0,
    head_diameter: 9.5,
    head_height: 3.3,
};
const N10_32: Thread = Thread {
    name: "10-32",
    tpi: 32.0,
    ..N10_24
};
const QUARTER_28: Thread = Thread {
    name: "1/4\"-28",
    major_diameter: 0.25 * INCH,
    tpi: 28.0,
    head_diameter: 12.0,
    head_height: 4.0,
};

const SCREWS: [(f64, &str, Thread); 9] = [
    (0.5, "1/2\"", N4_40),
    (0.5, "1/2\"", N4_48),
    (0.5, "1/2\"", N10_24),
    (0.5, "1/2\"", N10_32),
    (0.25, "1/4\"", N4_40),
    (0.25, "1/4\"", N10_24),
    (0.375, "3/8\"", N4_40),
    (0.375, "3/8\"", N10_24),
    (0.375, "3/8\"", QUARTER_28),
];

const DAILY: [(&str, Shape); 11] = [
    ("sphere r3", Shape::Sphere { r: 3.0 }),
    ("sphere r6", Shape::Sphere { r: 6.0 }),
    ("sphere r10", Shape::Sphere { r: 10.0 }),
    ("capsule r3 l10", Shape::Capsule { r: 3.0, len: 10.0 }),
    ("capsule r2 l6", Shape::Capsule { r: 2.0, len: 6.0 }),
    ("capsule r1 l20", Shape::Capsule { r: 1.0, len: 20.0 }),
    ("capsule r2.5 l20", Shape::Capsule { r: 2.5, len: 20.0 }),
    ("sphere r4", Shape::Sphere { r: 4.0 }),
    ("capsule r4 l6", Shape::Capsule { r: 4.0, len: 6.0 }),
    ("sphere r2.5", Shape::Sphere { r: 2.5 }),
    ("capsule r1.5 l9", Shape::Capsule { r: 1.5, len: 9.0 }),
];

/// Geometry of a physical class (1 to 20).
pub fn shape(class_id: u8) -> Option<Shape> {
    match class_id {
        1..=9 => {
            let (len_in, _, t) = SCREWS[class_id as usize - 1];
            let pitch = INCH / t.tpi;
            Some(Shape::Screw {
                head_r: 0.5 * t.head_diameter,
                head_h: t.head_height,
                shaft_r: 0.5 * t.major_diameter - 0.35 * pitch,
                shaft_len: len_in * INCH,
            })
        }
        10..=20 => Some(DAILY[class_id as usize - 10].1),
        _ => None,
    }
}

pub fn name(class_id: u8) -> String {
    match class_id {
        1..=9 => {
            let (_, len, t) = SCREWS[class_id as usize - 1];
            format!("screw {len} {}", t.name)
        }
        10..=20 => DAILY[class_id as usize - 10].0.to_string(),
        TWO_OBJECTS => "two objects".into(),
        PLANE => "plane / none".into(),
        _ => format!("unknown {class_id}"),
    }
}
