//! Canonical 68-point face layout (iBUG ordering).
//!
//! Offsets are integer micrometres from the face centre, image-style axes
//! (x to the viewer's right, y down). The layout is mirror-symmetric in x and
//! both its bounding-box midpoint and its centroid sit exactly at the origin,
//! so a frontal face projects to the same centre under either extraction rule.

/// Bumped whenever the point table changes; carried with exported templates.
pub const TEMPLATE_VERSION: u32 = 1;

pub const LANDMARK_COUNT: usize = 68;

const MICROMETRES: [(i32, i32); LANDMARK_COUNT] = [
    (-70000, -34526), (-69663, -14373), (-67832, 3847), (-64138, 20536),
    (-56984, 35274), (-45883, 47711), (-32368, 58000), (-17185, 66211),
    (0, 68548), (17185, 66211), (32368, 58000), (45883, 47711),
    (56984, 35274), (64138, 20536), (67832, 3847), (69663, -14373),
    (70000, -34526), (-55478, -52322), (-46729, -63788), (-35015, -68548),
    (-22970, -63396), (-11548, -55033), (11548, -55033), (22970, -63396),
    (35015, -68548), (46729, -63788), (55478, -52322), (0, -36750),
    (0, -23063), (0, -10515), (0, 1528), (-13605, 8753),
    (-7092, 11176), (0, 13228), (7092, 11176), (13605, 8753),
    (-41629, -35351), (-34320, -40547), (-25374, -40343), (-17862, -33481),
    (-26094, -31599), (-34807, -31723), (17862, -33481), (25374, -40343),
    (34320, -40547), (41629, -35351), (34807, -31723), (26094, -31599),
    (-27181, 28154), (-17313, 24719), (-7232, 23192), (0, 24683),
    (7232, 23192), (17313, 24719), (27181, 28154), (17709, 36746),
    (7848, 40500), (0, 41177), (-7848, 40500), (-17709, 36746),
    (-22941, 28727), (-7307, 28345), (0, 28974), (7307, 28345),
    (22941, 28727), (7620, 32679), (0, 33110), (-7620, 32679),
];

/// Offset of landmark `i` from the face centre, in metres.
pub fn offset_m(i: usize) -> (f64, f64) {
    let (x, y) = MICROMETRES[i];
    (f64::from(x) * 1e-6, f64::from(y) * 1e-6)
}

/// All offsets in metres, in landmark order.
pub fn offsets_m() -> impl Iterator<Item = (f64, f64)> {
    (0..LANDMARK_COUNT).map(offset_m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integer_layout_is_centred() {
        let sx: i64 = MICROMETRES.iter().map(|p| i64::from(p.0)).sum();
        let sy: i64 = MICROMETRES.iter().map(|p| i64::from(p.1)).sum();
        assert_eq!((sx, sy), (0, 0));
        let min_x = MICROMETRES.iter().map(|p| p.0).min().unwrap();
        let max_x = MICROMETRES.iter().map(|p| p.0).max().unwrap();
        let min_y = MICROMETRES.iter().map(|p| p.1).min().unwrap();
        let max_y = MICROMETRES.iter().map(|p| p.1).max().unwrap();
        assert_eq!(min_x, -max_x);
        assert_eq!(min_y, -max_y);
    }

    #[test]
    fn face_is_roughly_human_sized() {
        let (l, _) = offset_m(0);
        let (r, _) = offset_m(16);
        assert!((r - l - 0.14).abs() < 1e-9);
        // chin below the nose tip, brows above the eyes
        assert!(offset_m(8).1 > offset_m(30).1);
        assert!(offset_m(19).1 < offset_m(37).1);
    }
}
