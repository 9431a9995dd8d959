//! Binary morphology on [`BinaryMask`]: component labelling, hole filling
//! and square (Chebyshev) dilation.

use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i32, i32)] {
        const FOUR: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        const EIGHT: [(i32, i32); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Component {
    /// Label in [`Components::labels`]; labels start at 1 in raster-scan discovery order.
    pub label: u32,
    pub pixel_count: u64,
}

/// Result of [`connected_components`].
#[derive(Debug, Clone)]
pub struct Components {
    width: u32,
    height: u32,
    /// Per-pixel label, 0 for background.
    pub labels: Vec<u32>,
    /// Sorted by descending pixel count, ties by ascending label.
    pub components: Vec<Component>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn largest(&self) -> Option<&Component> {
        self.components.first()
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        let bits = self.labels.iter().map(|&l| (l == label && l != 0) as u8).collect();
        BinaryMask::from_bits_unchecked(self.width, self.height, bits)
    }
}

/// Flood fill from `seeds` over pixels where `passable` holds; returns visited flags.
fn flood(
    width: u32,
    height: u32,
    seeds: impl IntoIterator<Item = (u32, u32)>,
    conn: Connectivity,
    passable: impl Fn(usize) -> bool,
    visited: &mut [bool],
    mut on_visit: impl FnMut(usize),
) {
    let w = width as i32;
    let h = height as i32;
    let mut stack: Vec<(i32, i32)> = Vec::new();
    for (sx, sy) in seeds {
        let i = sy as usize * width as usize + sx as usize;
        if !visited[i] && passable(i) {
            visited[i] = true;
            on_visit(i);
            stack.push((sx as i32, sy as i32));
        }
        while let Some((x, y)) = stack.pop() {
            for &(dx, dy) in conn.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = ny as usize * width as usize + nx as usize;
                if !visited[j] && passable(j) {
                    visited[j] = true;
                    on_visit(j);
                    stack.push((nx, ny));
                }
            }
        }
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let (w, h) = mask.dimensions();
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut visited = vec![false; bits.len()];
    let mut components = Vec::new();
    let mut next = 1u32;
    for y in 0..h {
        for x in 0..w {
            let i = y as usize * w as usize + x as usize;
            if bits[i] == 0 || visited[i] {
                continue;
            }
            let label = next;
            next += 1;
            let mut count = 0u64;
            flood(
                w,
                h,
                [(x, y)],
                connectivity,
                |j| bits[j] == 1,
                &mut visited,
                |j| {
                    labels[j] = label;
                    count += 1;
                },
            );
            components.push(Component {
                label,
                pixel_count: count,
            });
        }
    }
    components.sort_by(|a, b| b.pixel_count.cmp(&a.pixel_count).then(a.label.cmp(&b.label)));
    Components {
        width: w,
        height: h,
        labels,
        components,
    }
}

/// Sets every background region that is not 4-connected to the frame border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let bits = mask.bits();
    let mut outside = vec![false; bits.len()];
    let border = (0..w)
        .flat_map(|x| [(x, 0), (x, h - 1)])
        .chain((0..h).flat_map(|y| [(0, y), (w - 1, y)]));
    flood(
        w,
        h,
        border,
        Connectivity::Four,
        |j| bits[j] == 0,
        &mut outside,
        |_| {},
    );
    let filled = outside.iter().map(|&o| (!o) as u8).collect();
    BinaryMask::from_bits_unchecked(w, h, filled)
}

/// Chebyshev-distance dilation by `radius`, clipped to the frame.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dimensions();
    let (wu, hu) = (w as usize, h as usize);
    let r = radius as usize;
    let src = mask.bits();

    // separable: running window max along rows, then columns
    let mut rows = vec![0u8; src.len()];
    for y in 0..hu {
        let row = &src[y * wu..(y + 1) * wu];
        let mut prefix = vec![0u32; wu + 1];
        for x in 0..wu {
            prefix[x + 1] = prefix[x] + row[x] as u32;
        }
        for x in 0..wu {
            let lo = x.saturating_sub(r);
            let hi = (x + r + 1).min(wu);
            rows[y * wu + x] = (prefix[hi] > prefix[lo]) as u8;
        }
    }
    let mut out = vec![0u8; src.len()];
    let mut prefix = vec![0u32; hu + 1];
    for x in 0..wu {
        for y in 0..hu {
            prefix[y + 1] = prefix[y] + rows[y * wu + x] as u32;
        }
        for y in 0..hu {
            let lo = y.saturating_sub(r);
            let hi = (y + r + 1).min(hu);
            out[y * wu + x] = (prefix[hi] > prefix[lo]) as u8;
        }
    }
    BinaryMask::from_bits_unchecked(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        BinaryMask::from_fn(w, h, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#').unwrap()
    }

    /// Reference labelling: repeated relaxation of min-label over neighbours.
    fn oracle_component_sizes(m: &BinaryMask, conn: Connectivity) -> Vec<u64> {
        let (w, h) = m.dimensions();
        let n = (w * h) as usize;
        let mut lab: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for y in 0..h as i32 {
                for x in 0..w as i32 {
                    if !m.get(x as u32, y as u32) {
                        continue;
                    }
                    let i = (y * w as i32 + x) as usize;
                    for &(dx, dy) in conn.offsets() {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                            continue;
                        }
                        if !m.get(nx as u32, ny as u32) {
                            continue;
                        }
                        let j = (ny * w as i32 + nx) as usize;
                        if lab[j] < lab[i] {
                            lab[i] = lab[j];
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut counts = std::collections::BTreeMap::new();
        for (i, &l) in lab.iter().enumerate() {
            if m.bits()[i] == 1 {
                *counts.entry(l).or_insert(0u64) += 1;
            }
        }
        let mut sizes: Vec<u64> = counts.into_values().collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::zeros(5, 5).unwrap();
        assert!(connected_components(&m, Connectivity::Eight).is_empty());
    }

    #[test]
    fn two_disjoint_blocks() {
        let m = mask_from(&[
            "##....", //
            "##....",
            "......",
            "......",
            "....##",
            "....##",
        ]);
        let cc = connected_components(&m, Connectivity::Four);
        let sizes: Vec<u64> = cc.components.iter().map(|c| c.pixel_count).collect();
        assert_eq!(sizes, oracle_component_sizes(&m, Connectivity::Four));
        assert_eq!(sizes, vec![4, 4]);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask_from(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
        assert_eq!(oracle_component_sizes(&m, Connectivity::Four).len(), 2);
        assert_eq!(oracle_component_sizes(&m, Connectivity::Eight).len(), 1);
    }

    #[test]
    fn components_sorted_descending_and_mask_of() {
        let m = mask_from(&["#...###", "....###"]);
        let cc = connected_components(&m, Connectivity::Eight);
        assert_eq!(cc.components[0].pixel_count, 6);
        assert_eq!(cc.components[1].pixel_count, 1);
        assert_eq!(cc.mask_of(cc.components[0].label).popcount(), 6);
    }

    #[test]
    fn ring_center_filled() {
        let m = mask_from(&[".....", ".###.", ".#.#.", ".###.", "....."]);
        let f = fill_holes(&m);
        assert!(f.get(2, 2));
        assert_eq!(f.popcount(), 9);
        // border-connected zeros untouched
        assert!(!f.get(0, 0));
    }

    #[test]
    fn fill_holes_trivial_cases() {
        let z = BinaryMask::zeros(4, 4).unwrap();
        assert_eq!(fill_holes(&z), z);
        let o = BinaryMask::ones(4, 4).unwrap();
        assert_eq!(fill_holes(&o), o);
    }

    #[test]
    fn dilate_cases() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2).unwrap();
        assert_eq!(dilate(&m, 0), m);
        let d = dilate(&m, 1);
        // neighbourhood enumeration oracle
        let expect = BinaryMask::from_fn(5, 5, |x, y| x.abs_diff(2) <= 1 && y.abs_diff(2) <= 1).unwrap();
        assert_eq!(d, expect);
        let full = BinaryMask::ones(5, 5).unwrap();
        assert_eq!(dilate(&full, 3), full);
    }

    #[test]
    fn dilate_matches_brute_force() {
        let m = mask_from(&["#......", ".......", "...#...", ".......", "......#"]);
        for r in 0..4u32 {
            let d = dilate(&m, r);
            let brute = BinaryMask::from_fn(7, 5, |x, y| {
                (0..5).any(|sy| (0..7).any(|sx| m.get(sx, sy) && sx.abs_diff(x) <= r && sy.abs_diff(y) <= r))
            })
            .unwrap();
            assert_eq!(d, brute, "radius {r}");
        }
    }
}
