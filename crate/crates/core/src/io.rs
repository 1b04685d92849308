//! CSV writers. Numbers use the shortest decimal that round-trips to the
//! same binary64 value.

use std::io::{self, Write};

use crate::error::Result;
use crate::heat::HeatSurface;
use crate::merton::PolicySample;

/// `z,t,H,Hz,Hzz,Hzzz` on the product grid, rows ordered by `t` then `z`.
pub fn write_h_csv<W: Write>(heat: &HeatSurface, z_grid: &[f64], t_grid: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "z,t,H,Hz,Hzz,Hzzz")?;
    for &t in t_grid {
        for &z in z_grid {
            let d = heat.derivs(z, t)?;
            writeln!(w, "{z},{t},{},{},{},{}", d.h(), d.hz(), d.hzz(), d.hzzz())?;
        }
    }
    Ok(())
}

/// `x,t,r,pi_1..pi_N,total`.
pub fn write_policy_csv<W: Write>(samples: &[PolicySample], dim: usize, mut w: W) -> io::Result<()> {
    let mut header = String::from("x,t,r");
    for i in 1..=dim {
        header.push_str(&format!(",pi_{i}"));
    }
    writeln!(w, "{header},total")?;
    for s in samples {
        write!(w, "{},{},{}", s.x, s.t, s.r)?;
        for p in &s.pi {
            write!(w, ",{p}")?;
        }
        writeln!(w, ",{}", s.total)?;
    }
    Ok(())
}
