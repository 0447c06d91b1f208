//! The dihedral group Dih4 acting on images: four rotations, four reflections.
//!
//! Index convention: `k in 0..4` is rotation by `k·90°` counter-clockwise,
//! `k in 4..8` is a horizontal flip (left-right mirror) followed after
//! rotation by `(k-4)·90°`, i.e. `k = 4 + r` means `fliph ∘ rot(r)`.

use ndarray::Array3;

use crate::error::{CoreError, Result};
use crate::image::Image;

/// Composition table: `DIH4_COMPOSE[a][b]` is the index of `a ∘ b`
/// (apply `b` first, then `a`).
pub const DIH4_COMPOSE: [[u8; 8]; 8] = build_compose_table();

const fn mul(a: usize, b: usize) -> usize {
    // Encode k<4 as rot(k), k>=4 as flip∘rot(k-4). Using the relations
    // rot(a)∘rot(b)=rot(a+b) and rot(a)∘flip = flip∘rot(-a):
    let (af, ar) = (a / 4, a % 4);
    let (bf, br) = (b / 4, b % 4);
    // a∘b = flip^af ∘ rot(ar) ∘ flip^bf ∘ rot(br)
    //     = flip^(af+bf) ∘ rot(±ar + br)  with sign flipped when bf=1.
    let rot = if bf == 1 { (4 - ar) % 4 + br } else { ar + br } % 4;
    ((af + bf) % 2) * 4 + rot
}

const fn build_compose_table() -> [[u8; 8]; 8] {
    let mut t = [[0u8; 8]; 8];
    let mut a = 0;
    while a < 8 {
        let mut b = 0;
        while b < 8 {
            t[a][b] = mul(a, b) as u8;
            b += 1;
        }
        a += 1;
    }
    t
}

/// Index of the inverse element.
pub fn dih4_inverse(k: u8) -> u8 {
    for j in 0..8 {
        if DIH4_COMPOSE[k as usize][j as usize] == 0 {
            return j;
        }
    }
    unreachable!("every Dih4 element has an inverse")
}

fn rot90_ccw(a: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = a.dim();
    Array3::from_shape_fn((w, h, c), |(i, j, ch)| a[(j, w - 1 - i, ch)])
}

fn fliph(a: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = a.dim();
    Array3::from_shape_fn((h, w, c), |(i, j, ch)| a[(i, w - 1 - j, ch)])
}

/// Applies group element `k` to the pixel array.
pub fn dih4_apply_array(a: &Array3<f64>, k: u8) -> Result<Array3<f64>> {
    if k >= 8 {
        return Err(CoreError::DihedralIndex(k));
    }
    let mut out = a.clone();
    for _ in 0..(k % 4) {
        out = rot90_ccw(&out);
    }
    if k >= 4 {
        out = fliph(&out);
    }
    Ok(out)
}

/// Applies group element `k` to an image, preserving metadata.
pub fn dih4_apply(img: &Image, k: u8) -> Result<Image> {
    let pixels = dih4_apply_array(&img.pixels, k)?;
    let mut out = Image::new(pixels, img.label)?;
    out.source_path = img.source_path.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probe() -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        Array3::from_shape_fn((8, 12, 3), |_| rng.gen::<f64>())
    }

    #[test]
    fn rot90_small_example() {
        // [[1,2],[3,4]] rotated 90° CCW is [[2,4],[1,3]].
        let a = Array3::from_shape_vec((2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = dih4_apply_array(&a, 1).unwrap();
        assert_eq!(
            r,
            Array3::from_shape_vec((2, 2, 1), vec![2.0, 4.0, 1.0, 3.0]).unwrap()
        );
    }

    #[test]
    fn identity_is_noop() {
        let a = probe();
        assert_eq!(dih4_apply_array(&a, 0).unwrap(), a);
    }

    #[test]
    fn four_rotations_cycle() {
        let a = probe();
        let mut cur = a.clone();
        for _ in 0..4 {
            cur = dih4_apply_array(&cur, 1).unwrap();
        }
        assert_eq!(cur, a);
    }

    #[test]
    fn flip_is_involution() {
        let a = probe();
        let f = dih4_apply_array(&a, 4).unwrap();
        assert_eq!(dih4_apply_array(&f, 4).unwrap(), a);
    }

    #[test]
    fn all_eight_distinct_on_generic_input() {
        let a = probe();
        let imgs: Vec<_> = (0..8).map(|k| dih4_apply_array(&a, k).unwrap()).collect();
        for i in 0..8 {
            for j in (i + 1)..8 {
                assert_ne!(imgs[i], imgs[j], "elements {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn compose_table_matches_application() {
        let a = probe();
        for x in 0..8u8 {
            for y in 0..8u8 {
                let seq = dih4_apply_array(&dih4_apply_array(&a, y).unwrap(), x).unwrap();
                let one = dih4_apply_array(&a, DIH4_COMPOSE[x as usize][y as usize]).unwrap();
                assert_eq!(seq, one, "compose({x},{y})");
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        let a = probe();
        for k in 0..8u8 {
            let inv = dih4_inverse(k);
            let back = dih4_apply_array(&dih4_apply_array(&a, k).unwrap(), inv).unwrap();
            assert_eq!(back, a, "k={k} inv={inv}");
        }
    }

    #[test]
    fn rejects_out_of_range_index() {
        let a = probe();
        assert!(matches!(
            dih4_apply_array(&a, 8),
            Err(CoreError::DihedralIndex(8))
        ));
    }

    #[test]
    fn group_table_is_a_latin_square() {
        for row in DIH4_COMPOSE.iter() {
            let mut seen = [false; 8];
            for &v in row {
                assert!(!seen[v as usize]);
                seen[v as usize] = true;
            }
        }
        for col in 0..8 {
            let mut seen = [false; 8];
            for row in 0..8 {
                let v = DIH4_COMPOSE[row][col] as usize;
                assert!(!seen[v]);
                seen[v] = true;
            }
        }
    }
}
