use proptest::prelude::*;
use regge_core::mesh::{mesh_sequence, min_angle, Rect, TriMesh, MIN_PERTURBED_ANGLE};

fn check_invariants(m: &TriMesh) {
    assert_eq!(m.n_vertices() as i64 - m.n_edges() as i64 + m.n_triangles() as i64, 1);
    for t in 0..m.n_triangles() {
        assert!(m.area(t) > 0.0);
        let c = m.centroid(t);
        for i in 0..3 {
            let tau = m.local_edge_tangent(t, i);
            let (e, _) = m.tri_edges[t][i];
            let mid = m.edge_point(e, 0.5);
            // Inward normal (-τ², τ¹) points towards the centroid.
            let nu = [-tau[1], tau[0]];
            assert!(nu[0] * (c[0] - mid[0]) + nu[1] * (c[1] - mid[1]) > 0.0);
        }
    }
    for e in 0..m.n_edges() {
        match m.edge_tris[e] {
            [Some(p), Some(q)] => {
                let tp = (0..3).find(|&i| m.tri_edges[p][i].0 == e).unwrap();
                let tq = (0..3).find(|&i| m.tri_edges[q][i].0 == e).unwrap();
                let (a, b) = (m.local_edge_tangent(p, tp), m.local_edge_tangent(q, tq));
                assert!((a[0] + b[0]).abs() < 1e-14 && (a[1] + b[1]).abs() < 1e-14);
                assert!(m.edge_tag(e).is_none());
            }
            _ => assert!(m.edge_tag(e).is_some()),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn perturbed_meshes_are_valid(n in 1usize..12, seed in any::<u64>(), a in 0.0f64..=0.25) {
        let base = TriMesh::unit_square(n);
        let m = base.perturb(a, seed);
        check_invariants(&m);
        let boundary = base.boundary_vertices();
        for v in 0..m.n_vertices() {
            if boundary[v] {
                prop_assert_eq!(m.vertices[v], base.vertices[v]);
            }
        }
        for t in 0..m.n_triangles() {
            prop_assert!(min_angle(m.tri_points(t)) >= MIN_PERTURBED_ANGLE - 1e-12);
        }
    }
}

#[test]
fn structured_counts() {
    let m = TriMesh::unit_square(1);
    assert_eq!((m.n_vertices(), m.n_triangles(), m.n_edges()), (4, 2, 5));
    let m = TriMesh::unit_square(2);
    assert_eq!((m.n_vertices(), m.n_edges(), m.n_triangles()), (9, 16, 8));
    assert!((TriMesh::unit_square(4).h_max - 2f64.sqrt() / 4.0).abs() < 1e-15);
    check_invariants(&TriMesh::structured(3, Rect::new([-1.0, 2.0], [2.0, 0.5])));
}

#[test]
fn sequence_halves_mesh_size() {
    let ms = mesh_sequence(Rect::UNIT, 2, 4, 0.25, 3);
    let ns: Vec<usize> = ms.iter().map(|m| (m.n_vertices() as f64).sqrt() as usize - 1).collect();
    assert_eq!(ns, vec![2, 4, 8, 16]);
    for w in ms.windows(2) {
        let r = w[0].h_max / w[1].h_max;
        assert!((r - 2.0).abs() < 0.2 * 2.0, "ratio {r}");
        assert_eq!(w[0].tag_set(), w[1].tag_set());
    }
}

#[test]
fn perturbation_follows_seed() {
    let m = TriMesh::unit_square(8);
    let a = m.perturb(0.25, 7);
    assert_eq!(a, m.perturb(0.25, 7));
    assert_ne!(a, m.perturb(0.25, 8));
    assert_eq!(m.perturb(0.0, 7), m);
}

#[test]
fn json_export_reproduces_doubles() {
    let m = TriMesh::unit_square(5).perturb(0.25, 1);
    let back = TriMesh::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
}
