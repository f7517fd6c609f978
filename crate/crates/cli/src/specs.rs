//! Parsers for the cone and region spec strings accepted on the command line.

use std::path::Path;
use std::sync::Arc;

use conelab_core::lab::perturbed_sector;
use conelab_core::optimize::random_smooth_init;
use conelab_core::region::RegionData;
use conelab_core::{ConeDescriptor, PatchGrid, QuadratureSpec, Region};

use crate::error::CliError;

/// `quadrant`, `orthant[:n]`, `halfspace[:n]`, `circular:a1,..,an:half_angle`
/// or `polyhedral:v1;v2;..` with each `v` a comma-separated normal.
/// `default_n` fills in a missing dimension.
pub fn parse_cone(spec: &str, default_n: usize) -> Result<ConeDescriptor, CliError> {
    let bad = |why: &str| CliError::Usage(format!("--cone `{spec}`: {why}"));
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h.trim(), Some(r.trim())),
        None => (spec.trim(), None),
    };
    let dim = |rest: Option<&str>| -> Result<usize, CliError> {
        match rest {
            None => Ok(default_n),
            Some(r) => r.parse::<usize>().map_err(|_| bad("dimension must be an integer")),
        }
    };
    let cone = match head {
        "quadrant" => {
            if rest.is_some() {
                return Err(bad("quadrant takes no arguments"));
            }
            ConeDescriptor::quadrant()
        }
        "orthant" => ConeDescriptor::orthant(dim(rest)?),
        "halfspace" => ConeDescriptor::halfspace(dim(rest)?),
        "circular" => {
            let r = rest.ok_or_else(|| bad("expected circular:<axis>:<half_angle>"))?;
            let (axis, angle) = r.rsplit_once(':').ok_or_else(|| bad("expected circular:<axis>:<half_angle>"))?;
            let axis = parse_list(axis).map_err(|_| bad("axis must be comma-separated numbers"))?;
            let angle: f64 = angle.trim().parse().map_err(|_| bad("half angle must be a number"))?;
            ConeDescriptor::circular(axis, angle)
        }
        "polyhedral" => {
            let r = rest.ok_or_else(|| bad("expected polyhedral:<normal>;<normal>;.."))?;
            let normals = r
                .split(';')
                .map(parse_list)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("normals must be comma-separated numbers"))?;
            ConeDescriptor::polyhedral(normals)
        }
        _ => return Err(bad("unknown cone kind")),
    };
    cone.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(cone)
}

fn parse_list(s: &str) -> Result<Vec<f64>, std::num::ParseFloatError> {
    s.split(',').map(|v| v.trim().parse::<f64>()).collect()
}

/// `K`, `ball:<r>`, `cube[:<side>]` (default: `|E| = |K|`),
/// `perturbed:<eps>`, `random:<seed>`, or a path to a region JSON file.
pub fn parse_region(spec: &str, cone: &ConeDescriptor, quad: &QuadratureSpec) -> Result<Region, CliError> {
    let bad = |why: String| CliError::Usage(format!("--region `{spec}`: {why}"));
    let grid = || -> Result<Arc<PatchGrid>, CliError> {
        Ok(Arc::new(PatchGrid::build(cone, quad).map_err(|e| bad(e.to_string()))?))
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")));
    let (head, rest) = match spec.split_once(':') {
        Some((h, r)) => (h.trim(), Some(r)),
        None => (spec.trim(), None),
    };
    let region = match (head, rest) {
        ("K", None) => Region::ball(grid()?, 1.0),
        ("ball", Some(r)) => Region::ball(grid()?, num(r)?),
        ("cube", side) => {
            let g = grid()?;
            let n = g.dimension() as f64;
            let side = match side {
                Some(s) => num(s)?,
                None => (g.surface_measure() / n).powf(1.0 / n),
            };
            Region::cube(g, side).map_err(|e| bad(e.to_string()))?
        }
        ("perturbed", Some(eps)) => perturbed_sector(grid()?, num(eps)?).map_err(|e| bad(e.to_string()))?,
        ("random", Some(seed)) => {
            let seed = seed.trim().parse::<u64>().map_err(|_| bad("seed must be an integer".into()))?;
            random_smooth_init(grid()?, seed).map_err(|e| bad(e.to_string()))?
        }
        _ => return read_region(Path::new(spec)),
    };
    Ok(region)
}

pub fn read_region(path: &Path) -> Result<Region, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--region `{}`: not a builtin and unreadable ({e})", path.display())))?;
    let data: RegionData = serde_json::from_str(&text).map_err(|e| CliError::config(path, &e))?;
    data.into_region().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_region(region: &Region, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(&region.to_data()).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_specs() {
        assert_eq!(parse_cone("quadrant", 3).unwrap(), ConeDescriptor::quadrant());
        assert_eq!(parse_cone("orthant", 3).unwrap(), ConeDescriptor::orthant(3));
        assert_eq!(parse_cone("halfspace:2", 3).unwrap(), ConeDescriptor::halfspace(2));
        let c = parse_cone("circular:0,0,2:0.5", 2).unwrap();
        assert_eq!(c, ConeDescriptor::circular(vec![0.0, 0.0, 1.0], 0.5));
        let p = parse_cone("polyhedral:1,0;0,1", 2).unwrap();
        assert_eq!(p, ConeDescriptor::quadrant());
        assert!(parse_cone("wedge", 2).is_err());
        assert!(parse_cone("orthant:x", 2).is_err());
    }

    #[test]
    fn region_specs() {
        let cone = ConeDescriptor::quadrant();
        let quad = QuadratureSpec::with_resolution(32);
        let k = parse_region("K", &cone, &quad).unwrap();
        assert!(k.radii().iter().all(|r| *r == 1.0));
        let cube = parse_region("cube", &cone, &quad).unwrap();
        assert!((cube.volume() - k.volume()).abs() < 1e-12);
        assert!(parse_region("ball:2", &cone, &quad).unwrap().radii()[0] == 2.0);
        assert!(parse_region("ball:zero", &cone, &quad).is_err());
        assert!(parse_region("/nonexistent/region.json", &cone, &quad).is_err());
    }

    #[test]
    fn region_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.json");
        let cone = ConeDescriptor::quadrant();
        let quad = QuadratureSpec::with_resolution(16);
        let e = parse_region("random:4", &cone, &quad).unwrap();
        write_region(&e, &path).unwrap();
        let back = parse_region(path.to_str().unwrap(), &cone, &quad).unwrap();
        assert_eq!(back.radii(), e.radii());
    }
}
