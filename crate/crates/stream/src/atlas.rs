use inpaint_core::bpfa::Dictionary;

use crate::wire::{quantize, FrameType, WireFrame};

/// Separator and empty-cell grey level.
pub const MID_GREY: u8 = 128;

/// A rendered dictionary: one tile per atom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Atlas {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Atlas {
    pub fn into_frame(self, problem_id: u16, frame_id: u32) -> WireFrame {
        WireFrame {
            kind: FrameType::Atlas,
            problem_id,
            width: self.width,
            height: self.height,
            frame_id,
            payload: self.pixels,
        }
    }
}

/// Tiles the atoms in a `⌈√K⌉ × ⌈√K⌉` grid, most-used first, each atom
/// min-max normalized on its own. Cells are separated by one-pixel
/// mid-grey lines; a constant atom renders mid-grey. Patches past rank 2
/// show their first slice.
pub fn render_dictionary_atlas(dict: &Dictionary) -> Atlas {
    let shape = dict.patch_shape();
    let (th, tw) = match shape {
        [w] => (1, *w),
        [h, w, ..] => (*h, *w),
        [] => (1, 1),
    };
    let rest: usize = shape.iter().skip(2).product();
    let k = dict.len();
    let grid = (1..=k).find(|g| g * g >= k).unwrap_or(1);
    let width = grid * tw + grid - 1;
    let height = grid * th + grid - 1;
    let mut pixels = vec![MID_GREY; width * height];

    for (cell, atom_idx) in dict.order_by_usage().into_iter().enumerate() {
        let atom = dict.atom(atom_idx);
        let tile: Vec<f64> = (0..th * tw).map(|i| atom[i * rest]).collect();
        let lo = tile.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (gr, gc) = (cell / grid, cell % grid);
        let (y0, x0) = (gr * (th + 1), gc * (tw + 1));
        for r in 0..th {
            for c in 0..tw {
                let v = tile[r * tw + c];
                let norm = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                pixels[(y0 + r) * width + x0 + c] = quantize(norm);
            }
        }
    }
    Atlas {
        width: width as u32,
        height: height as u32,
        pixels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(k: usize, shape: &[usize]) -> Dictionary {
        let p: usize = shape.iter().product();
        let atoms = (0..k * p).map(|i| ((i * 7919) % 101) as f64).collect();
        let pi = (0..k).map(|i| 0.1 + 0.8 * i as f64 / k as f64).collect();
        Dictionary::new(shape.to_vec(), atoms, pi).unwrap()
    }

    #[test]
    fn k64_b10_is_87_square() {
        let a = render_dictionary_atlas(&dict(64, &[10, 10]));
        assert_eq!((a.width, a.height), (87, 87));
        assert_eq!(a.pixels.len(), 87 * 87);
        for i in 0..87 {
            assert_eq!(a.pixels[10 * 87 + i], MID_GREY);
            assert_eq!(a.pixels[i * 87 + 10], MID_GREY);
        }
    }

    #[test]
    fn single_atom_fills_range() {
        let a = render_dictionary_atlas(&dict(1, &[4, 3]));
        assert_eq!((a.width, a.height), (3, 4));
        assert!(a.pixels.contains(&0));
        assert!(a.pixels.contains(&255));
    }

    #[test]
    fn constant_atom_is_mid_grey() {
        let d = Dictionary::new(vec![2, 2], vec![3.0; 4], vec![0.5]).unwrap();
        assert_eq!(render_dictionary_atlas(&d).pixels, vec![MID_GREY; 4]);
    }

    #[test]
    fn five_atoms_leave_four_cells_empty() {
        let d = dict(5, &[2, 2]);
        let a = render_dictionary_atlas(&d);
        assert_eq!((a.width, a.height), (8, 8));
        let tile_at = |gr: usize, gc: usize| -> Vec<u8> {
            (0..2)
                .flat_map(|r| (0..2).map(move |c| (r, c)))
                .map(|(r, c)| a.pixels[(gr * 3 + r) * 8 + gc * 3 + c])
                .collect()
        };
        for (gr, gc) in [(1, 2), (2, 0), (2, 1), (2, 2)] {
            assert_eq!(tile_at(gr, gc), vec![MID_GREY; 4]);
        }
        assert_ne!(tile_at(0, 0), vec![MID_GREY; 4]);
    }

    #[test]
    fn tiles_follow_usage_order() {
        let d = Dictionary::new(vec![1, 2], vec![0.0, 1.0, 1.0, 0.0], vec![0.2, 0.9]).unwrap();
        let a = render_dictionary_atlas(&d);
        assert_eq!((a.width, a.height), (5, 3));
        assert_eq!(&a.pixels[0..2], &[255, 0]);
        assert_eq!(&a.pixels[3..5], &[0, 255]);
    }

    #[test]
    fn spanning_patch_shows_first_slice() {
        let atoms = vec![0.0, 9.0, 1.0, 9.0];
        let d = Dictionary::new(vec![1, 2, 2], atoms, vec![0.5]).unwrap();
        assert_eq!(render_dictionary_atlas(&d).pixels, vec![0, 255]);
    }
}
