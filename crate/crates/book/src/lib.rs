//! Runs the Rust snippets of the guide in `book/src` as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[cfg(doctest)]
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub struct $name;
    };
}

chapter!(Intro, "intro.md");
chapter!(Model, "model.md");
chapter!(Simulation, "simulation.md");
chapter!(Axioms, "axioms.md");
chapter!(Identification, "identification.md");
chapter!(Estimation, "estimation.md");
chapter!(Cli, "cli.md");
