mod common;

use common::checks;

#[test]
fn gradient_check_linear() {
    checks::gradient_check_linear();
}

#[test]
fn gradient_check_mlp() {
    checks::gradient_check_mlp();
}

#[test]
fn gradient_check_conv1d() {
    checks::gradient_check_conv1d();
}

#[test]
fn training_is_bitwise_deterministic() {
    checks::training_is_bitwise_deterministic();
}

#[test]
fn constant_target_is_learned() {
    checks::constant_target_is_learned();
}
