use std::io::{self, Write};

use super::SamplePath;

pub const COLUMNS: &str = "time,kind,road,x1,x2,z1,z2,u";

/// Write the flat comma-separated event log. `comments` are emitted first as
/// `# `-prefixed lines.
pub fn write_event_log<W: Write>(path: &SamplePath, comments: &[String], mut out: W) -> io::Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "{COLUMNS}")?;
    for e in &path.events {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            e.time,
            e.kind.label(),
            e.road.number(),
            e.x[0],
            e.x[1],
            e.z[0],
            e.z[1],
            e.u.number()
        )?;
    }
    Ok(())
}
