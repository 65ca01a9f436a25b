use perfhom::manufactured::{mms_study, observed_orders};

#[test]
fn spatial_order_on_fixed_geometry() {
    let rows = mms_study(0.5, &[0, 1, 2]).unwrap();
    let orders = observed_orders(&rows);
    for r in &rows {
        eprintln!("level {} nodes {} error {:.6e}", r.refine_level, r.n_nodes, r.error);
    }
    assert!(orders.iter().all(|&p| p >= 1.8), "orders {orders:?}");
}
