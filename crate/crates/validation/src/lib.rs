//! Holds the acceptance suite (`cargo test -p spekit-validation --test acceptance`).
