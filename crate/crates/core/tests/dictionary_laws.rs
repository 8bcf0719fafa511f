#[path = "support/dict_laws.rs"]
mod dict_laws;

#[test]
fn partition_laws_on_random_corpora() {
    assert_eq!(dict_laws::check_random_corpora(200, 7).unwrap(), 200);
}
