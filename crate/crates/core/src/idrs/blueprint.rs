use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RegionSets;
use crate::error::{Error, Result};
use crate::qr::codec::read_format;
use crate::qr::{MaskChoice, ModuleMatrix, QrSpec};
use crate::raster::{GrayImage, L_MAX};
use crate::scanner::GridGeometry;

/// Guidance image: source texture with hard central sub-squares carrying the target bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Blueprint {
    pub image: GrayImage,
    pub geometry: GridGeometry,
    pub target_matrix: ModuleMatrix,
    pub regions: RegionSets,
    pub sub_square_ratio: f64,
}

/// Everything but the raster, for the `.json` sidecar of a saved blueprint.
#[derive(Serialize, Deserialize)]
struct BlueprintMeta {
    schema_version: u32,
    geometry: GridGeometry,
    target_matrix: ModuleMatrix,
    regions: RegionSets,
    sub_square_ratio: f64,
}

/// Side of the hard central square for a module of `a` pixels.
pub fn sub_square_side(a: usize, ratio: f64) -> usize {
    ((ratio * a as f64).round() as usize).clamp(1, a)
}

pub fn build_blueprint(
    source: &GrayImage,
    target: &ModuleMatrix,
    regions: &RegionSets,
    geom: &GridGeometry,
    sub_square_ratio: f64,
) -> Result<Blueprint> {
    if !(sub_square_ratio > 0.0 && sub_square_ratio <= 1.0) {
        return Err(Error::Parameter(format!("sub-square ratio {sub_square_ratio} outside (0, 1]")));
    }
    geom.check(source)?;
    let n = geom.n;
    if target.n() != n || regions.n != n {
        return Err(Error::Parameter(format!(
            "grid has {n} modules per side, target {} and regions {}",
            target.n(),
            regions.n
        )));
    }
    let a = geom.module_size;
    let s = sub_square_side(a, sub_square_ratio);
    let lo = (a - s) / 2;
    // quiet zone white, as decoders need it
    let mut image = GrayImage::from_fn(source.width(), source.height(), |x, y| match geom.module_at(x, y) {
        Some(_) => source.get(x, y),
        None => L_MAX,
    });
    for j in 0..n * n {
        if regions.face.contains(&j) {
            continue;
        }
        let value = L_MAX * target.at(j) as f64;
        let hard_all = regions.markers.contains(&j);
        geom.for_each_pixel(j, |x, y, k| {
            let (u, v) = (k % a, k / a);
            if hard_all || ((lo..lo + s).contains(&u) && (lo..lo + s).contains(&v)) {
                image.set(x, y, value);
            }
        });
    }
    Ok(Blueprint {
        image,
        geometry: *geom,
        target_matrix: target.clone(),
        regions: regions.clone(),
        sub_square_ratio,
    })
}

impl Blueprint {
    /// Symbol parameters recovered from the target's format information.
    pub fn spec(&self) -> Result<QrSpec> {
        let n = self.target_matrix.n();
        if n < 21 || (n - 17) % 4 != 0 {
            return Err(Error::Parameter(format!("{n} is not a symbol side")));
        }
        let (ec, mask) = read_format(&self.target_matrix)?;
        let quiet_zone = self.geometry.origin_x / self.geometry.module_size;
        Ok(QrSpec { version: ((n - 17) / 4) as u8, ec_level: ec, mask: MaskChoice::Fixed(mask), quiet_zone })
    }

    /// Write `<stem>.png` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        self.image.save(dir.join(format!("{stem}.png")))?;
        let meta = BlueprintMeta {
            schema_version: 1,
            geometry: self.geometry,
            target_matrix: self.target_matrix.clone(),
            regions: self.regions.clone(),
            sub_square_ratio: self.sub_square_ratio,
        };
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string(&meta)?)?;
        Ok(())
    }

    /// Load a blueprint saved with [`Blueprint::save`]; `path` is either file of the pair.
    pub fn load(path: impl AsRef<Path>) -> Result<Blueprint> {
        let path = path.as_ref();
        let meta: BlueprintMeta = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
        let image = GrayImage::load(path.with_extension("png"))?;
        meta.geometry.check(&image)?;
        Ok(Blueprint {
            image,
            geometry: meta.geometry,
            target_matrix: meta.target_matrix,
            regions: meta.regions,
            sub_square_ratio: meta.sub_square_ratio,
        })
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::qr::build_matrix;
    use crate::scanner::{extract_modules, render};

    fn setup(a: usize) -> (QrSpec, GridGeometry, ModuleMatrix, RegionSets) {
        let spec = QrSpec::default();
        let g = GridGeometry::for_spec(&spec, a).unwrap();
        let m = build_matrix(b"blueprint", &spec).unwrap();
        let face: BTreeSet<usize> = (14..23).flat_map(|r| (13..24).map(move |c| r * 37 + c)).collect();
        let regions = RegionSets::new(&spec, face).unwrap();
        (spec, g, m, regions)
    }

    fn textured(side: usize) -> GrayImage {
        GrayImage::from_fn(side, side, |x, y| ((x * 37 + y * 91) % 251) as f64)
    }

    #[test]
    fn full_ratio_is_hard_rendering_outside_face() {
        let (_, g, m, regions) = setup(5);
        let src = textured(g.image_side());
        let bp = build_blueprint(&src, &m, &regions, &g, 1.0).unwrap();
        let hard = render(&m, &g);
        for j in 0..37 * 37 {
            g.for_each_pixel(j, |x, y, _| {
                let want = if regions.is_face(j) { src.get(x, y) } else { hard.get(x, y) };
                assert_eq!(bp.image.get(x, y), want);
            });
        }
    }

    #[test]
    fn third_ratio_patch_arithmetic() {
        assert_eq!(sub_square_side(27, 1.0 / 3.0), 9);
        let g = GridGeometry::new(0, 0, 27, 21).unwrap();
        let spec = QrSpec::new(1, crate::qr::EcLevel::M).unwrap();
        let m = build_matrix(b"a", &spec).unwrap();
        let regions = RegionSets::new(&spec, BTreeSet::new()).unwrap();
        let src = GrayImage::new(g.image_side(), g.image_side(), 77.0);
        let bp = build_blueprint(&src, &m, &regions, &g, 1.0 / 3.0).unwrap();
        // first data module in placement order
        let (r, c) = crate::qr::placement_order(&spec)[0];
        let j = r * 21 + c;
        let mut textured_px = 0;
        g.for_each_pixel(j, |x, y, _| textured_px += (bp.image.get(x, y) == 77.0) as usize);
        assert_eq!(textured_px, 648);
    }

    #[test]
    fn face_purity_and_mean_threshold_agreement() {
        let (_, g, m, regions) = setup(16);
        for base in [88.0, 128.0, 168.0] {
            let src = GrayImage::new(g.image_side(), g.image_side(), base);
            let bp = build_blueprint(&src, &m, &regions, &g, 1.0 / 3.0).unwrap();
            let e = extract_modules(&bp.image, &g, 128.0).unwrap();
            for j in 0..37 * 37 {
                if regions.is_face(j) {
                    g.for_each_pixel(j, |x, y, _| assert_eq!(bp.image.get(x, y), base));
                    continue;
                }
                if regions.markers.contains(&j) {
                    continue;
                }
                // module mean: 25/256 of the hard value, the rest source
                let mean = (25.0 * 255.0 * m.at(j) as f64 + 231.0 * base) / 256.0;
                if (mean >= 128.0) == (m.at(j) == 1) {
                    assert_eq!(e.at(j), m.at(j), "module {j} base {base}");
                }
            }
        }
    }

    #[test]
    fn quiet_zone_is_white() {
        let (_, g, m, regions) = setup(4);
        let bp = build_blueprint(&textured(g.image_side()), &m, &regions, &g, 0.5).unwrap();
        let side = g.image_side();
        for (x, y) in (0..side).flat_map(|y| (0..side).map(move |x| (x, y))) {
            if g.module_at(x, y).is_none() {
                assert_eq!(bp.image.get(x, y), L_MAX);
            }
        }
    }

    #[test]
    fn function_modules_fully_hard() {
        let (_, g, m, regions) = setup(6);
        let bp = build_blueprint(&textured(g.image_side()), &m, &regions, &g, 0.2).unwrap();
        for &j in &regions.markers {
            if !regions.is_face(j) {
                g.for_each_pixel(j, |x, y, _| assert_eq!(bp.image.get(x, y), 255.0 * m.at(j) as f64));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (_, g, m, regions) = setup(4);
        let bp = build_blueprint(&textured(g.image_side()), &m, &regions, &g, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        bp.save(dir.path(), "bp").unwrap();
        assert_eq!(Blueprint::load(dir.path().join("bp.png")).unwrap(), bp);
        let spec = bp.spec().unwrap();
        assert_eq!((spec.version, spec.ec_level, spec.quiet_zone), (5, crate::qr::EcLevel::H, 4));
    }

    #[test]
    fn rejects_bad_ratio() {
        let (_, g, m, regions) = setup(4);
        let src = textured(g.image_side());
        assert!(build_blueprint(&src, &m, &regions, &g, 0.0).is_err());
        assert!(build_blueprint(&src, &m, &regions, &g, 1.5).is_err());
    }
}
