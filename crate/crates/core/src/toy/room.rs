//! Synthetic glossy-room dataset generator.
//!
//! A box room with matte walls, four area lights under the ceiling and one
//! glossy floor. Ground-truth color follows the same split-sum composition
//! the renderer uses: c = c_d + s * preconvolved(reflect(d, n)), so the
//! dataset is exactly representable by the model and ships with its full
//! decomposition.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::reflect;
use crate::gde::Bbox;
use crate::geom::{pfm, Camera, ImageBuffer, Ray, Vec3};
use crate::rng;

use super::lights::{toy_light_layout, ToyLight};
use super::preconv::preconvolve_oracle;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoomConfig {
    pub seed: u64,
    pub image_width: usize,
    pub image_height: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Monte-Carlo samples per glossy pixel.
    pub n_mc: usize,
    pub floor_roughness: f64,
    pub floor_tint: f64,
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            image_width: 256,
            image_height: 192,
            n_train: 16,
            n_test: 4,
            n_mc: 1024,
            floor_roughness: 0.08,
            floor_tint: 0.85,
            room_min: [-2.0, -2.0, 0.0],
            room_max: [2.0, 2.0, 2.5],
        }
    }
}

impl RoomConfig {
    pub fn room(&self) -> Bbox {
        Bbox::new(Vec3::from_array(self.room_min), Vec3::from_array(self.room_max))
    }
}

/// One rendered view with its ground-truth decomposition.
#[derive(Clone, Debug)]
pub struct RoomView {
    pub camera: Camera,
    pub image: ImageBuffer,
    /// View-space unit normals in [-1, 1].
    pub normal_view: ImageBuffer,
    pub depth: ImageBuffer,
    pub gt_diffuse: ImageBuffer,
    pub gt_specular: ImageBuffer,
    pub gt_tint: ImageBuffer,
    pub gt_roughness: ImageBuffer,
}

#[derive(Clone, Debug)]
pub struct RoomDataset {
    pub config: RoomConfig,
    pub lights: Vec<ToyLight>,
    pub views: Vec<RoomView>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Ring of cameras inside the room looking at the floor center.
pub fn default_room_cameras(cfg: &RoomConfig) -> (Vec<Camera>, Vec<usize>, Vec<usize>) {
    let total = cfg.n_train + cfg.n_test;
    let (w, h) = (cfg.image_width, cfg.image_height);
    let fx = 0.9 * w as f64;
    let target = Vec3::new(0.0, 0.0, 0.15);
    let mut cams = Vec::with_capacity(total);
    for i in 0..total {
        let ang = i as f64 / total as f64 * std::f64::consts::TAU;
        let radius = 1.25 + 0.15 * (i as f64 * 1.7).sin();
        let height = 1.35 + 0.35 * (i as f64 * 0.9).cos();
        let center = Vec3::new(radius * ang.cos(), radius * ang.sin(), height);
        cams.push(
            Camera::look_at(
                fx,
                fx,
                w as f64 / 2.0,
                h as f64 / 2.0,
                center,
                target,
                Vec3::new(0.0, 0.0, 1.0),
                w,
                h,
            )
            .expect("ring camera construction"),
        );
    }
    // Every (n_train + n_test) / n_test -th view is held out.
    let stride = total.div_ceil(cfg.n_test.max(1));
    let test_ids: Vec<usize> = (0..total).filter(|i| i % stride == stride - 1).collect();
    let train_ids: Vec<usize> = (0..total).filter(|i| !test_ids.contains(i)).collect();
    (cams, train_ids, test_ids)
}

struct SurfaceHit {
    t: f64,
    normal: Vec3,
    diffuse: Vec3,
    tint: f64,
    roughness: f64,
    emissive: Option<Vec3>,
}

fn intersect_room(room: &Bbox, lights: &[ToyLight], mats: &RoomMaterials, ray: &Ray) -> Option<SurfaceHit> {
    let mut best: Option<SurfaceHit> = None;
    let mut consider = |hit: SurfaceHit| {
        if best.as_ref().map_or(true, |b| hit.t < b.t) {
            best = Some(hit);
        }
    };
    // Lights first (they hang inside the room).
    for l in lights {
        if let Some(t) = l.hit(ray) {
            let facing = if ray.direction.dot(l.normal) > 0.0 { -l.normal } else { l.normal };
            consider(SurfaceHit {
                t,
                normal: facing,
                diffuse: l.radiance,
                tint: 0.0,
                roughness: 1.0,
                emissive: Some(l.radiance),
            });
        }
    }
    // Box interior faces.
    for axis in 0..3 {
        for side in 0..2 {
            let (plane, normal) = match (axis, side) {
                (0, 0) => (room.min.x, Vec3::new(1.0, 0.0, 0.0)),
                (0, 1) => (room.max.x, Vec3::new(-1.0, 0.0, 0.0)),
                (1, 0) => (room.min.y, Vec3::new(0.0, 1.0, 0.0)),
                (1, 1) => (room.max.y, Vec3::new(0.0, -1.0, 0.0)),
                (2, 0) => (room.min.z, Vec3::new(0.0, 0.0, 1.0)),
                _ => (room.max.z, Vec3::new(0.0, 0.0, -1.0)),
            };
            let (o, d) = match axis {
                0 => (ray.origin.x, ray.direction.x),
                1 => (ray.origin.y, ray.direction.y),
                _ => (ray.origin.z, ray.direction.z),
            };
            if d.abs() < 1e-12 {
                continue;
            }
            let t = (plane - o) / d;
            if t <= 1e-9 {
                continue;
            }
            // The interior face only counts when the ray approaches it.
            if ray.direction.dot(normal) >= 0.0 {
                continue;
            }
            let p = ray.point_at(t);
            let inside_face = match axis {
                0 => {
                    p.y >= room.min.y - 1e-9
                        && p.y <= room.max.y + 1e-9
                        && p.z >= room.min.z - 1e-9
                        && p.z <= room.max.z + 1e-9
                }
                1 => {
                    p.x >= room.min.x - 1e-9
                        && p.x <= room.max.x + 1e-9
                        && p.z >= room.min.z - 1e-9
                        && p.z <= room.max.z + 1e-9
                }
                _ => {
                    p.x >= room.min.x - 1e-9
                        && p.x <= room.max.x + 1e-9
                        && p.y >= room.min.y - 1e-9
                        && p.y <= room.max.y + 1e-9
                }
            };
            if !inside_face {
                continue;
            }
            let px_mat = if mats.mirror_x { -p.x } else { p.x };
            let hit = if axis == 2 && side == 0 {
                // Glossy checkered floor.
                let checker =
                    (((px_mat * 2.0).floor() + (p.y * 2.0).floor()) as i64).rem_euclid(2);
                let albedo = if checker == 0 { 0.13 } else { 0.27 };
                SurfaceHit {
                    t,
                    normal,
                    diffuse: Vec3::splat(albedo),
                    tint: mats.tint,
                    roughness: mats.roughness,
                    emissive: None,
                }
            } else {
                let span = room.max - room.min;
                let fade = 0.7 + 0.3 * ((p.z - room.min.z) / span.z).clamp(0.0, 1.0);
                let side_mat = if axis == 0 && mats.mirror_x { 1 - side } else { side };
                let base = match (axis, side_mat) {
                    (0, 0) => Vec3::new(0.42, 0.30, 0.26),
                    (0, 1) => Vec3::new(0.28, 0.40, 0.30),
                    (1, 0) => Vec3::new(0.30, 0.30, 0.44),
                    (1, 1) => Vec3::new(0.40, 0.38, 0.26),
                    _ => Vec3::splat(0.48), // ceiling
                };
                SurfaceHit {
                    t,
                    normal,
                    diffuse: base * fade,
                    tint: 0.0,
                    roughness: 1.0,
                    emissive: None,
                }
            };
            consider(hit);
        }
    }
    best
}

struct RoomMaterials {
    tint: f64,
    roughness: f64,
    /// Evaluate all materials at the x-mirrored position (used by the
    /// mirror-symmetry oracle).
    mirror_x: bool,
}

/// Renders every view of the room dataset. Errors when a camera sits
/// outside the room.
pub fn generate_synthetic_room(cfg: &RoomConfig, cameras: &[Camera]) -> Result<Vec<RoomView>> {
    let room = cfg.room();
    for (i, cam) in cameras.iter().enumerate() {
        if !room.contains(cam.center) {
            return Err(Error::invalid(format!(
                "camera {i} at {:?} is outside the room",
                cam.center
            )));
        }
    }
    let mut layout_rng = rng::stream(cfg.seed, "room-lights");
    let lights = toy_light_layout(&mut layout_rng);
    let mats = RoomMaterials {
        tint: cfg.floor_tint,
        roughness: cfg.floor_roughness,
        mirror_x: false,
    };

    cameras
        .par_iter()
        .enumerate()
        .map(|(view_idx, cam)| render_room_view(cfg, &room, &lights, &mats, cam, view_idx))
        .collect()
}

fn render_room_view(
    cfg: &RoomConfig,
    room: &Bbox,
    lights: &[ToyLight],
    mats: &RoomMaterials,
    cam: &Camera,
    view_idx: usize,
) -> Result<RoomView> {
    let (w, h) = (cam.width, cam.height);
    let mut image = ImageBuffer::new(w, h, 3);
    let mut normal_view = ImageBuffer::new(w, h, 3);
    let mut depth = ImageBuffer::new(w, h, 1);
    let mut gt_diffuse = ImageBuffer::new(w, h, 3);
    let mut gt_specular = ImageBuffer::new(w, h, 3);
    let mut gt_tint = ImageBuffer::new(w, h, 3);
    let mut gt_roughness = ImageBuffer::new(w, h, 1);
    let view_from_world = cam.rotation.transpose();

    for y in 0..h {
        for x in 0..w {
            let ray = cam.pixel_ray(x, y);
            let Some(hit) = intersect_room(room, lights, mats, &ray) else {
                // Closed box: only numerically grazing rays miss.
                image.set_valid(x, y, false);
                normal_view.set_valid(x, y, false);
                depth.set_valid(x, y, false);
                continue;
            };
            let p = ray.point_at(hit.t);
            let (color, spec) = if let Some(radiance) = hit.emissive {
                (radiance, Vec3::ZERO)
            } else if hit.tint > 0.0 {
                let refl = reflect(ray.direction, hit.normal);
                let seed = rng::derive_seed2(cfg.seed, "room-spec", view_idx as u64, (y * w + x) as u64);
                let c_s = preconvolve_oracle(lights, p, refl, hit.roughness, cfg.n_mc, seed)?;
                (hit.diffuse + c_s * hit.tint, c_s)
            } else {
                (hit.diffuse, Vec3::ZERO)
            };
            image.set_pixel_vec3(x, y, color);
            gt_diffuse.set_pixel_vec3(x, y, hit.diffuse);
            gt_specular.set_pixel_vec3(x, y, spec);
            gt_tint.set_pixel_vec3(x, y, Vec3::splat(hit.tint));
            gt_roughness.set(x, y, 0, hit.roughness);
            normal_view.set_pixel_vec3(x, y, view_from_world.mul_vec(hit.normal));
            depth.set(x, y, 0, hit.t);
        }
    }
    Ok(RoomView {
        camera: cam.clone(),
        image,
        normal_view,
        depth,
        gt_diffuse,
        gt_specular,
        gt_tint,
        gt_roughness,
    })
}

/// Builds the full dataset with the default camera rig.
pub fn build_room_dataset(cfg: &RoomConfig) -> Result<RoomDataset> {
    let (cams, train_ids, test_ids) = default_room_cameras(cfg);
    let views = generate_synthetic_room(cfg, &cams)?;
    let mut layout_rng = rng::stream(cfg.seed, "room-lights");
    let lights = toy_light_layout(&mut layout_rng);
    Ok(RoomDataset { config: cfg.clone(), lights, views, train_ids, test_ids })
}

#[derive(Serialize, Deserialize)]
struct CamerasJson {
    cameras: Vec<Camera>,
    train_ids: Vec<usize>,
    test_ids: Vec<usize>,
}

/// Writes the dataset directory: cameras.json plus images/, normals/,
/// depth/, masks/ (and the gt/ decomposition).
pub fn write_room_dataset(dir: &Path, ds: &RoomDataset) -> Result<()> {
    for sub in ["images", "normals", "depth", "masks", "gt"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let cams = CamerasJson {
        cameras: ds.views.iter().map(|v| v.camera.clone()).collect(),
        train_ids: ds.train_ids.clone(),
        test_ids: ds.test_ids.clone(),
    };
    fs::write(dir.join("cameras.json"), serde_json::to_string_pretty(&cams)?)?;
    fs::write(dir.join("lights.json"), serde_json::to_string_pretty(&ds.lights)?)?;
    fs::write(dir.join("room.json"), serde_json::to_string_pretty(&ds.config)?)?;
    for (i, v) in ds.views.iter().enumerate() {
        pfm::write_pfm(&dir.join(format!("images/{i:04}.pfm")), &v.image)?;
        pfm::write_pfm(
            &dir.join(format!("normals/{i:04}.pfm")),
            &pfm::encode_normals(&v.normal_view),
        )?;
        pfm::write_pfm(&dir.join(format!("depth/{i:04}.pfm")), &v.depth)?;
        pfm::write_mask(&dir.join(format!("masks/{i:04}.pfm")), &v.image)?;
        pfm::write_pfm(&dir.join(format!("gt/diffuse_{i:04}.pfm")), &v.gt_diffuse)?;
        pfm::write_pfm(&dir.join(format!("gt/specular_{i:04}.pfm")), &v.gt_specular)?;
        pfm::write_pfm(&dir.join(format!("gt/tint_{i:04}.pfm")), &v.gt_tint)?;
        pfm::write_pfm(&dir.join(format!("gt/roughness_{i:04}.pfm")), &v.gt_roughness)?;
    }
    Ok(())
}

/// Loads a dataset directory written by [`write_room_dataset`].
pub fn load_room_dataset(dir: &Path) -> Result<RoomDataset> {
    let cams: CamerasJson = serde_json::from_str(&fs::read_to_string(dir.join("cameras.json"))?)?;
    let lights: Vec<ToyLight> = serde_json::from_str(&fs::read_to_string(dir.join("lights.json"))?)?;
    let config: RoomConfig = serde_json::from_str(&fs::read_to_string(dir.join("room.json"))?)?;
    let mut views = Vec::with_capacity(cams.cameras.len());
    for (i, camera) in cams.cameras.into_iter().enumerate() {
        let mut image = pfm::read_pfm(&dir.join(format!("images/{i:04}.pfm")))?;
        let mask = pfm::read_pfm(&dir.join(format!("masks/{i:04}.pfm")))?;
        pfm::apply_mask(&mut image, &mask)?;
        let normal_view =
            pfm::decode_normals(&pfm::read_pfm(&dir.join(format!("normals/{i:04}.pfm")))?);
        let depth = pfm::read_pfm(&dir.join(format!("depth/{i:04}.pfm")))?;
        let gt_diffuse = pfm::read_pfm(&dir.join(format!("gt/diffuse_{i:04}.pfm")))?;
        let gt_specular = pfm::read_pfm(&dir.join(format!("gt/specular_{i:04}.pfm")))?;
        let gt_tint = pfm::read_pfm(&dir.join(format!("gt/tint_{i:04}.pfm")))?;
        let gt_roughness = pfm::read_pfm(&dir.join(format!("gt/roughness_{i:04}.pfm")))?;
        views.push(RoomView {
            camera,
            image,
            normal_view,
            depth,
            gt_diffuse,
            gt_specular,
            gt_tint,
            gt_roughness,
        });
    }
    Ok(RoomDataset {
        config,
        lights,
        views,
        train_ids: cams.train_ids,
        test_ids: cams.test_ids,
    })
}

impl RoomDataset {
    /// Scene bounding box for field training (the room itself).
    pub fn scene_bbox(&self) -> Bbox {
        self.config.room()
    }

    pub fn to_train_set(&self, with_normals: bool) -> crate::field::TrainSet {
        let view = |i: &usize| {
            let v = &self.views[*i];
            crate::field::TrainView {
                camera: v.camera.clone(),
                image: v.image.clone(),
                normal_view: with_normals.then(|| v.normal_view.clone()),
            }
        };
        crate::field::TrainSet {
            train: self.train_ids.iter().map(view).collect(),
            test: self.test_ids.iter().map(view).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RoomConfig {
        RoomConfig {
            seed: 5,
            image_width: 48,
            image_height: 36,
            n_train: 3,
            n_test: 1,
            n_mc: 256,
            ..Default::default()
        }
    }

    #[test]
    fn camera_outside_room_rejected() {
        let cfg = tiny_cfg();
        let cam = Camera::look_at(
            40.0,
            40.0,
            24.0,
            18.0,
            Vec3::new(5.0, 0.0, 1.0),
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            48,
            36,
        )
        .unwrap();
        assert!(generate_synthetic_room(&cfg, &[cam]).is_err());
    }

    #[test]
    fn floor_normals_point_up_in_view_space() {
        let cfg = tiny_cfg();
        // Straight-down camera over the floor center.
        let cam = Camera::look_at(
            60.0,
            60.0,
            24.0,
            18.0,
            Vec3::new(0.3, 0.0, 1.5),
            Vec3::new(0.3, 0.001, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            48,
            36,
        )
        .unwrap();
        let views = generate_synthetic_room(&cfg, &[cam.clone()]).unwrap();
        let v = &views[0];
        let n_view = v.normal_view.pixel_vec3(24, 18);
        let expect = cam.rotation.transpose().mul_vec(Vec3::new(0.0, 0.0, 1.0));
        assert!((n_view - expect).norm() < 1e-9);
        // Looking straight down, the floor normal is the -z view axis.
        assert!(n_view.z < -0.99);
    }

    #[test]
    fn specular_is_local_to_the_floor() {
        let mut cfg = tiny_cfg();
        let (cams, _, _) = default_room_cameras(&cfg);
        let with_spec = generate_synthetic_room(&cfg, &cams[..1]).unwrap();
        cfg.floor_tint = 0.0;
        let without = generate_synthetic_room(&cfg, &cams[..1]).unwrap();
        let a = &with_spec[0];
        let b = &without[0];
        let mut diff_on_floor = 0usize;
        for y in 0..a.image.height {
            for x in 0..a.image.width {
                let d = (a.image.pixel_vec3(x, y) - b.image.pixel_vec3(x, y)).norm();
                let is_floor = a.gt_tint.get(x, y, 0) > 0.0;
                if is_floor {
                    diff_on_floor += usize::from(d > 1e-6);
                } else {
                    assert!(d < 1e-12, "non-floor pixel changed by tint");
                }
            }
        }
        assert!(diff_on_floor > 0, "some floor pixels must carry specular");
    }

    #[test]
    fn composition_is_exact() {
        // image = diffuse + tint * specular everywhere (emitters have
        // specular 0).
        let cfg = tiny_cfg();
        let (cams, _, _) = default_room_cameras(&cfg);
        let views = generate_synthetic_room(&cfg, &cams[..2]).unwrap();
        for v in &views {
            for y in 0..v.image.height {
                for x in 0..v.image.width {
                    if !v.image.is_valid(x, y) {
                        continue;
                    }
                    let composed = v.gt_diffuse.pixel_vec3(x, y)
                        + v.gt_specular.pixel_vec3(x, y).mul_elem(v.gt_tint.pixel_vec3(x, y));
                    assert!(
                        (composed - v.image.pixel_vec3(x, y)).norm() < 1e-9,
                        "pixel ({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn colors_stay_in_unit_range() {
        let cfg = tiny_cfg();
        let (cams, _, _) = default_room_cameras(&cfg);
        let views = generate_synthetic_room(&cfg, &cams[..2]).unwrap();
        for v in &views {
            for val in &v.image.data {
                assert!(*val >= 0.0 && *val <= 1.0, "value {val}");
            }
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg();
        cfg.n_mc = 64;
        let ds = build_room_dataset(&cfg).unwrap();
        write_room_dataset(dir.path(), &ds).unwrap();
        let back = load_room_dataset(dir.path()).unwrap();
        assert_eq!(back.views.len(), ds.views.len());
        assert_eq!(back.train_ids, ds.train_ids);
        // PFM stores f32; compare at that precision.
        for (a, b) in ds.views.iter().zip(back.views.iter()) {
            for (x, y) in a.image.data.iter().zip(b.image.data.iter()) {
                assert!((x - y).abs() < 1e-6);
            }
            for (x, y) in a.normal_view.data.iter().zip(b.normal_view.data.iter()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mirrored_scene_renders_mirrored_image() {
        let cfg = RoomConfig { seed: 9, n_mc: 4096, ..tiny_cfg() };
        let room = cfg.room();
        let mut layout_rng = rng::stream(cfg.seed, "room-lights");
        let mut lights = toy_light_layout(&mut layout_rng);
        let mats = RoomMaterials {
            tint: cfg.floor_tint,
            roughness: cfg.floor_roughness,
            mirror_x: false,
        };

        let cam = Camera::look_at(
            60.0,
            60.0,
            24.0,
            18.0,
            Vec3::new(0.4, -1.2, 1.4),
            Vec3::new(0.1, 0.0, 0.1),
            Vec3::new(0.0, 0.0, 1.0),
            48,
            36,
        )
        .unwrap();
        let orig = render_room_view(&cfg, &room, &lights, &mats, &cam, 0).unwrap();

        // Mirror lights, camera and materials about the x = 0 plane.
        let mirror = |v: Vec3| Vec3::new(-v.x, v.y, v.z);
        for l in lights.iter_mut() {
            l.center = mirror(l.center);
            l.u_axis = mirror(l.u_axis) * -1.0; // keep the frame right-handed
            l.v_axis = mirror(l.v_axis);
            l.normal = mirror(l.normal);
            if let super::super::lights::LightShape::Triangle { verts } = &mut l.shape {
                for v in verts.iter_mut() {
                    v[0] = -v[0];
                }
            }
        }
        let mmats = RoomMaterials { mirror_x: true, ..mats };
        let mcam = Camera::look_at(
            60.0,
            60.0,
            48.0 - 24.0,
            18.0,
            mirror(cam.center),
            Vec3::new(-0.1, 0.0, 0.1),
            Vec3::new(0.0, 0.0, 1.0),
            48,
            36,
        )
        .unwrap();
        let mirrored = render_room_view(&cfg, &room, &lights, &mmats, &mcam, 0).unwrap();

        // Compare against the horizontally flipped original; matte pixels
        // are deterministic, glossy pixels carry independent Monte-Carlo
        // noise.
        let mut max_matte: f64 = 0.0;
        let mut mean_floor = 0.0;
        let mut count = 0.0;
        for y in 0..36 {
            for x in 0..48 {
                let a = orig.image.pixel_vec3(x, y);
                let b = mirrored.image.pixel_vec3(47 - x, y);
                let err = (a - b).norm();
                if orig.gt_tint.get(x, y, 0) == 0.0 {
                    max_matte = max_matte.max(err);
                } else {
                    mean_floor += err;
                    count += 1.0;
                }
            }
        }
        assert!(max_matte < 1e-9, "matte mirror error {max_matte}");
        if count > 0.0 {
            mean_floor /= count;
            assert!(mean_floor < 0.05, "floor mirror error {mean_floor}");
        }
    }
}
