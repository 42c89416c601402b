//! Filter tables for the dual-tree transform.
//!
//! Level 1: near-symmetric biorthogonal (13,19)-tap pair, refined so the
//! synthesis pair satisfies the halfband product identity to machine
//! precision. Levels >= 2: a 14-tap orthonormal quarter-shift filter
//! designed on the paraunitary lattice (exact two-scale orthonormality)
//! with the group delay targeted at a quarter sample off center.

pub(crate) const H0O: [f64; 13] = [
    -0.0017578,
    0.0,
    0.0222656,
    -0.046875,
    -0.0482422,
    0.296875,
    0.5554688,
    0.296875,
    -0.0482422,
    -0.046875,
    0.0222656,
    0.0,
    -0.0017578,
];

pub(crate) const H1O: [f64; 19] = [
    -7.062617424539408e-05,
    -1.1768513917018241e-23,
    0.0013418987680408666,
    -0.0018833780394543452,
    -0.007156801978828274,
    0.023856017838060264,
    0.05564307403870402,
    -0.05168807214161294,
    -0.29975758787294865,
    0.5594307782474593,
    -0.29975758787294865,
    -0.05168807214161294,
    0.05564307403870402,
    0.023856017838060264,
    -0.007156801978828274,
    -0.0018833780394543452,
    0.0013418987680408666,
    -1.1768513917018241e-23,
    -7.062617424539408e-05,
];

pub(crate) const G0O: [f64; 19] = [
    7.062617424539408e-05,
    -1.1768513917018241e-23,
    -0.0013418987680408666,
    -0.0018833780394543452,
    0.007156801978828274,
    0.023856017838060264,
    -0.05564307403870402,
    -0.05168807214161294,
    0.29975758787294865,
    0.5594307782474593,
    0.29975758787294865,
    -0.05168807214161294,
    -0.05564307403870402,
    0.023856017838060264,
    0.007156801978828274,
    -0.0018833780394543452,
    -0.0013418987680408666,
    -1.1768513917018241e-23,
    7.062617424539408e-05,
];

pub(crate) const G1O: [f64; 13] = [
    -0.0017578,
    -0.0,
    0.0222656,
    0.046875,
    -0.0482422,
    -0.296875,
    0.5554688,
    -0.296875,
    -0.0482422,
    0.046875,
    0.0222656,
    -0.0,
    -0.0017578,
];

pub(crate) const H0A: [f64; 14] = [
    -0.030096750244482606,
    0.007034523214256477,
    0.042779410710217666,
    -0.03866971506183168,
    -0.06263206388399936,
    0.2890640159073596,
    0.7707111532055587,
    0.5425024350016147,
    -0.019851778249551207,
    -0.13450640384417498,
    0.0029505587918924126,
    0.03741818553751064,
    0.0014218791043955894,
    0.0060834173090956,
];
