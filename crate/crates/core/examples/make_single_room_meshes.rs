//! Regenerates the box meshes of the bundled scenes.
//!
//! Run from the workspace root:
//!
//! ```text
//! cargo run --example make_single_room_meshes [scenes-dir]
//! ```
//!
//! The scenes directory defaults to `scenes`; meshes land in
//! `<scenes-dir>/single-room/meshes` and `<scenes-dir>/workshop/meshes`.

use std::path::{Path, PathBuf};

use vantage::geometry::{Point3, TriMesh, Vector3};
use vantage::io::write_off;

fn write_boxes(dir: &Path, boxes: &[(&str, [f64; 3])]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, half) in boxes {
        let mesh = TriMesh::cuboid(Vector3::new(half[0], half[1], half[2]));
        write_off(&dir.join(name), &mesh)?;
    }
    Ok(())
}

fn write_floor(dir: &Path, w: f64, d: f64) -> anyhow::Result<()> {
    let floor = TriMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(w, 0.0, 0.0),
            Point3::new(w, d, 0.0),
            Point3::new(0.0, d, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )?;
    write_off(&dir.join("floor.off"), &floor)?;
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let scenes = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("scenes"));

    let robot: &[(&str, [f64; 3])] = &[
        ("frame.off", [0.4, 0.03, 0.25]),
        ("column.off", [0.15, 0.15, 0.5]),
        ("boom.off", [0.35, 0.08, 0.07]),
        ("stick.off", [0.3, 0.06, 0.05]),
    ];

    let single = scenes.join("single-room/meshes");
    write_boxes(&single, robot)?;
    write_boxes(&single, &[("wall_segment.off", [0.05, 1.5, 1.25])])?;
    write_floor(&single, 8.0, 6.0)?;

    let workshop = scenes.join("workshop/meshes");
    write_boxes(&workshop, robot)?;
    write_boxes(
        &workshop,
        &[
            ("wall_x.off", [4.1, 0.05, 1.25]),
            ("wall_y.off", [0.05, 3.1, 1.25]),
        ],
    )?;
    write_floor(&workshop, 8.0, 6.0)?;

    println!("wrote meshes under {}", scenes.display());
    Ok(())
}
