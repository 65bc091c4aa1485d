//! Pinhole camera looking straight down at the table, and a disc rasterizer.

use crate::types::Frame;

pub const BACKGROUND: [u8; 3] = [40, 40, 40];
pub const TARGET_RED: [u8; 3] = [255, 0, 0];

/// Workspace box the camera is confined to, in cm.
pub const WORKSPACE_CM: [f64; 3] = [40.0, 60.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    pub joint_positions: [f64; 7],
    pub joint_velocities: [f64; 7],
    /// Camera centre in box coordinates, cm.
    pub camera_position: [f64; 3],
}

/// Red target lying on the table plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub position: [f64; 3],
    pub radius_cm: f64,
}

/// Focal length is `focal_scale * image_width` pixels, so the framing is the
/// same at every resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub focal_scale: f64,
}

/// Where and how large the target lands on the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Column coordinate of the disc centre, pixels (pixel centres at +0.5).
    pub u: f64,
    /// Row coordinate of the disc centre.
    pub v: f64,
    pub radius_px: f64,
}

impl CameraModel {
    pub fn focal_px(&self, width: usize) -> f64 {
        self.focal_scale * width as f64
    }

    /// Projects the target. `None` when it is behind the image plane.
    pub fn project(
        &self,
        camera: [f64; 3],
        target: &TargetSpec,
        height: usize,
        width: usize,
    ) -> Option<Projection> {
        let dx = target.position[0] - camera[0];
        let dy = target.position[1] - camera[1];
        let depth = camera[2] - target.position[2];
        if depth <= 0.0 {
            return None;
        }
        let f = self.focal_px(width);
        let dist = (dx * dx + dy * dy + depth * depth).sqrt();
        Some(Projection {
            u: width as f64 / 2.0 + f * dx / depth,
            v: height as f64 / 2.0 + f * dy / depth,
            radius_px: f * target.radius_cm / dist,
        })
    }
}

/// Renders the target as a filled red disc on a dark gray background.
///
/// A pixel is red when its centre lies within the projected radius.
pub fn render(
    arm: &ArmState,
    target: &TargetSpec,
    camera: &CameraModel,
    height: usize,
    width: usize,
) -> Frame {
    let mut frame = Frame::filled(width, height, BACKGROUND);
    if let Some(p) = camera.project(arm.camera_position, target, height, width) {
        draw_disc(&mut frame, p);
    }
    frame
}

fn draw_disc(frame: &mut Frame, p: Projection) {
    let (h, w) = (frame.height() as f64, frame.width() as f64);
    let r = p.radius_px;
    // Clip the disc's bounding box to the frame; empty when fully outside.
    let c0 = (p.u - r - 0.5).floor().max(0.0);
    let c1 = (p.u + r - 0.5).ceil().min(w - 1.0);
    let r0 = (p.v - r - 0.5).floor().max(0.0);
    let r1 = (p.v + r - 0.5).ceil().min(h - 1.0);
    if c0 > c1 || r0 > r1 {
        return;
    }
    let r2 = r * r;
    for row in r0 as usize..=r1 as usize {
        let dy = row as f64 + 0.5 - p.v;
        for col in c0 as usize..=c1 as usize {
            let dx = col as f64 + 0.5 - p.u;
            if dx * dx + dy * dy <= r2 {
                frame.set_pixel(row, col, TARGET_RED);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm_at(camera: [f64; 3]) -> ArmState {
        ArmState {
            joint_positions: [0.0; 7],
            joint_velocities: [0.0; 7],
            camera_position: camera,
        }
    }

    fn red_count(f: &Frame) -> usize {
        (0..f.height())
            .flat_map(|r| (0..f.width()).map(move |c| (r, c)))
            .filter(|&(r, c)| f.pixel(r, c) == TARGET_RED)
            .count()
    }

    const CAM: CameraModel = CameraModel { focal_scale: 0.5 };

    #[test]
    fn target_out_of_view_renders_background_only() {
        let target = TargetSpec {
            position: [200.0, 30.0, -4.0],
            radius_cm: 4.0,
        };
        let f = render(&arm_at([20.0, 30.0, 10.0]), &target, &CAM, 24, 40);
        assert_eq!(red_count(&f), 0);
        assert!(f.pixels().chunks(3).all(|p| p == BACKGROUND));
    }

    #[test]
    fn target_behind_image_plane_is_invisible() {
        let target = TargetSpec {
            position: [20.0, 30.0, 15.0],
            radius_cm: 4.0,
        };
        assert_eq!(red_count(&render(&arm_at([20.0, 30.0, 10.0]), &target, &CAM, 24, 40)), 0);
    }

    #[test]
    fn closest_approach_matches_independent_rasterization() {
        // Camera at the box floor, directly above the target: d = table gap.
        let target = TargetSpec {
            position: [20.0, 30.0, -4.0],
            radius_cm: 4.0,
        };
        let (h, w) = (24usize, 40usize);
        let f = render(&arm_at([20.0, 30.0, 0.0]), &target, &CAM, h, w);
        let radius = 0.5 * w as f64 * 4.0 / 4.0;
        for row in 0..h {
            for col in 0..w {
                let x = col as f64 + 0.5 - w as f64 / 2.0;
                let y = row as f64 + 0.5 - h as f64 / 2.0;
                let inside = x * x + y * y <= radius * radius;
                assert_eq!(f.pixel(row, col) == TARGET_RED, inside, "pixel ({row},{col})");
            }
        }
        // The disc dominates the frame at minimum approach distance.
        assert!(red_count(&f) as f64 >= 0.6 * (h * w) as f64);
    }

    #[test]
    fn halving_distance_doubles_radius() {
        let target = TargetSpec {
            position: [20.0, 30.0, -4.0],
            radius_cm: 4.0,
        };
        let far = CAM.project([20.0, 30.0, 28.0], &target, 90, 160).unwrap();
        let near = CAM.project([20.0, 30.0, 12.0], &target, 90, 160).unwrap();
        assert!((near.radius_px - 2.0 * far.radius_px).abs() < 1e-12);
        // Rasterized extent along the centre row agrees within one pixel.
        let width_px = |cam: [f64; 3]| {
            let f = render(&arm_at(cam), &target, &CAM, 90, 160);
            (0..160).filter(|&c| f.pixel(45, c) == TARGET_RED).count() as f64
        };
        let (wf, wn) = (width_px([20.0, 30.0, 28.0]), width_px([20.0, 30.0, 12.0]));
        assert!((wn - 2.0 * wf).abs() <= 2.0, "{wn} vs {wf}");
    }
}
