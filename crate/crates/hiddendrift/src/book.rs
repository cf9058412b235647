/*!
The chapters of the `book/` guide, included here so that every code block
in the book compiles and runs under `cargo test --doc`.

Each sub-module below is one chapter, in reading order. The rendered
version lives in the repository's `book/` directory (`mdbook build book`);
these modules exist so the guide and the library can never drift apart —
a snippet that stops compiling or an assertion that stops holding fails
the test suite, not the reader.
*/

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/filtering.md")]
pub mod filtering {}

#[doc = include_str!("../../../book/src/riccati.md")]
pub mod riccati {}

#[doc = include_str!("../../../book/src/nested-monte-carlo.md")]
pub mod nested_monte_carlo {}

#[doc = include_str!("../../../book/src/strategies.md")]
pub mod strategies {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
