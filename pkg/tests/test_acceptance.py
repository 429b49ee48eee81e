"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines; every criterion asserts its stated tolerance and time budget.
"""

import time
from contextlib import contextmanager

import numpy as np

from conftest import procrustes_residual
from curvcodec import (
    areacal,
    cli,
    confmap,
    cvtmesh,
    meshcore as mc,
    quatmath as qm,
    shapecodec as sc,
    shapes,
    spinrec as sr,
)


@contextmanager
def criterion(number, description, budget_seconds):
    start = time.monotonic()
    state = {"elapsed": None}
    try:
        yield state
    except BaseException:
        print(f"ACCEPTANCE {number:2d} FAIL {description}")
        raise
    state["elapsed"] = time.monotonic() - start
    print(f"ACCEPTANCE {number:2d} PASS {description} [{state['elapsed']:.1f}s]")
    assert state["elapsed"] < budget_seconds, (
        f"criterion {number} exceeded its {budget_seconds}s budget"
    )


def test_criterion_01_quaternion_algebra():
    with criterion(1, "quaternion and block algebra, 1e4 identities at 1e-12", 1.0):
        rng = np.random.default_rng(101)
        n = 10_000
        a = rng.uniform(-2.0, 2.0, size=(n, 4))
        b = rng.uniform(-2.0, 2.0, size=(n, 4))
        c = rng.uniform(-2.0, 2.0, size=(n, 4))
        # Hamilton table through associativity and norms
        lhs = qm.qmul(qm.qmul(a, b), c)
        rhs = qm.qmul(a, qm.qmul(b, c))
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(lhs).max()
        assert np.allclose(
            qm.qnorm(qm.qmul(a, b)), qm.qnorm(a) * qm.qnorm(b), rtol=1e-12
        )
        # block embedding is a ring homomorphism
        emb = qm.block_embed(a[:100])
        emb_b = qm.block_embed(b[:100])
        prod = qm.block_embed(qm.qmul(a[:100], b[:100]))
        assert np.abs(emb @ emb_b - prod).max() <= 1e-12 * np.abs(prod).max()
        assert np.abs(
            np.einsum("nij,nj->ni", emb, b[:100]) - qm.qmul(a[:100], b[:100])
        ).max() < 1e-12 * np.abs(b).max() * np.abs(a).max()
        # rotation preserves dot products up to |q|^4
        v = rng.normal(size=(n, 3))
        w = rng.normal(size=(n, 3))
        rv = qm.rotate_vector(a, v)
        rw = qm.rotate_vector(a, w)
        scale = np.sum(a * a, axis=1) ** 2
        dots = np.einsum("ij,ij->i", v, w)
        assert np.abs(
            np.einsum("ij,ij->i", rv, rw) - scale * dots
        ).max() <= 1e-12 * np.abs(scale * dots).max()


def test_criterion_02_dirac_kernel(bumpy5k, icospheres):
    with criterion(2, "Dirac kernel |D 1| <= 1e-10 |D|_F on five meshes", 5.0):
        meshes = [shapes.cube(refine=2), icospheres[1], icospheres[2], icospheres[3], bumpy5k]
        for mesh in meshes:
            d = sr.assemble_dirac(mesh)
            ones = np.tile([1.0, 0.0, 0.0, 0.0], mesh.n_faces)
            fro = np.sqrt(float(d.multiply(d).sum()))
            assert np.linalg.norm(d @ ones) <= 1e-10 * fro


def test_criterion_03_spin_identity(icospheres):
    with criterion(3, "spin identity and constant-rotation transform", 5.0):
        mesh = icospheres[3]
        phi1 = np.tile([1.0, 0.0, 0.0, 0.0], (mesh.n_faces, 1))
        assert np.array_equal(sr.transform_edges(mesh, phi1), mesh.edge_vectors)
        out, _ = sr.integrate_positions(mesh, sr.transform_edges(mesh, phi1))
        d = out.positions - mesh.positions
        d -= d.mean(axis=0)
        assert np.abs(d).max() < 1e-10
        q = np.array([np.cos(0.37), np.sin(0.37) * 0.48, np.sin(0.37) * 0.6, np.sin(0.37) * 0.64])
        q /= np.linalg.norm(q)
        phiq = np.tile(q, (mesh.n_faces, 1))
        rotated, _ = sr.integrate_positions(mesh, sr.transform_edges(mesh, phiq))
        assert procrustes_residual(rotated.positions, mesh.positions) < 1e-8


def test_criterion_04_willmore_sphere(icospheres):
    with criterion(4, "Willmore of the unit sphere -> 4 pi, monotone", 5.0):
        errs = []
        for level in (2, 3, 4):
            w = mc.willmore(icospheres[level])
            errs.append(abs(w - 4 * np.pi) / (4 * np.pi))
        assert errs[2] < errs[1] < errs[0]
        assert errs[2] < 0.02


def test_criterion_05_round_trip():
    with criterion(5, "encode/reconstruct round trip, r.W < 5% of target W", 600.0):
        target = shapes.bumpy_sphere(4, 0.1)  # 2562 vertices
        param = confmap.sphere_parameterize(target)
        domain = sc.build_sphere_domain(2, 32)
        tensor = sc.encode(target, param, domain)
        pts = cvtmesh.sample_points(domain, tensor, seed=42)
        relaxed, _ = cvtmesh.lloyd_relax(pts, tensor, domain, max_iter=80, seed=42)
        pmesh = cvtmesh.delaunay_dual(cvtmesh.voronoi_sphere(relaxed))
        bary = pmesh.face_barycenters
        bary /= np.linalg.norm(bary, axis=1)[:, None]
        target_h = tensor.decode(bary)[:, 0]
        out, report = sr.reconstruct(pmesh, target_h, steps=10, with_area_calibration=True)
        w_target = report.target_willmore
        rws = [row["rel_willmore"] for row in report.steps]
        assert rws[-1] < 0.05 * w_target
        increases = sum(b >= a for a, b in zip(rws, rws[1:]))
        assert increases <= 2


def test_criterion_06_area_calibration(round_trip, bumpy4_target_h):
    with criterion(6, "area calibration reduces log-area variance", 60.0):
        out_nocal, _ = round_trip["no_cal"]
        out_cal, _ = round_trip["cal"]
        var_nocal = np.log(out_nocal.face_areas).var()
        var_cal = np.log(out_cal.face_areas).var()
        assert var_cal < var_nocal
        print(f"    log-area variance ratio with/without calibration: "
              f"{var_cal / var_nocal:.3f}")
        rw_nocal = mc.relative_willmore_to_field(out_nocal, bumpy4_target_h)
        rw_cal = mc.relative_willmore_to_field(out_cal, bumpy4_target_h)
        assert abs(rw_cal - rw_nocal) < 0.1 * rw_nocal


def test_criterion_07_remesh_factors(bumpy4, bumpy4_tensor):
    with criterion(7, "remesh factors 0.25/0.75/1/2 hit m|V| within 10%", 1800.0):
        w_orig = mc.willmore(bumpy4)
        for factor in (0.25, 0.75, 1.0, 2.0):
            scaled = sc.scale_density(bumpy4_tensor, factor)
            domain = scaled.domain
            pts = cvtmesh.sample_points(domain, scaled, seed=7)
            relaxed, _ = cvtmesh.lloyd_relax(pts, scaled, domain, max_iter=60, seed=7)
            pmesh = cvtmesh.delaunay_dual(cvtmesh.voronoi_sphere(relaxed))
            bary = pmesh.face_barycenters
            bary /= np.linalg.norm(bary, axis=1)[:, None]
            target_h = scaled.decode(bary)[:, 0]
            out, _rep = sr.reconstruct(pmesh, target_h, steps=10)
            expect = factor * bumpy4.n_vertices
            assert abs(out.n_vertices - expect) <= 0.10 * expect
            w_out = mc.willmore(out)
            print(f"    m={factor}: V={out.n_vertices} (expect {expect:.0f}), "
                  f"W={w_out:.3f} vs {w_orig:.3f}")
            if factor >= 0.75:
                assert abs(w_out - w_orig) <= 0.15 * w_orig


def test_criterion_08_cvt_quality():
    with criterion(8, "uniform-density Lloyd: monotone energy, area CV < 0.15", 60.0):
        domain = sc.build_sphere_domain(2, 8)
        logd = np.log(500 / (4 * np.pi))
        data = np.stack(
            [np.zeros((320, 8, 8)), np.full((320, 8, 8), logd)], axis=-1
        )
        tensor = sc.CurvatureTensor("sphere", data)
        pts = cvtmesh.sample_points(domain, tensor, seed=11)
        relaxed, report = cvtmesh.lloyd_relax(
            pts, tensor, domain, max_iter=50, tol=0.0, record_energy=True
        )
        energies = np.array(report.energies)
        assert np.all(np.diff(energies) <= 1e-9 * energies[0])
        areas = cvtmesh.voronoi_sphere(relaxed).cell_areas()
        assert areas.std() / areas.mean() < 0.15


def test_criterion_09_quadrature_oracles(icospheres):
    with criterion(9, "closed-form assemblies match their quadrature oracles", 120.0):
        from test_areacal import closing_solution, oracle_energy, structured_strip
        from test_cvtmesh import quadrature_centroid

        rng = np.random.default_rng(202)
        # weighted centroid vs direct 2D integration (1e-8, 100 triangles)
        for _ in range(100):
            tri = rng.normal(size=(3, 2))
            if abs(np.linalg.det(tri[1:] - tri[0])) < 0.05:
                continue
            dens = rng.uniform(0.2, 3.0, size=3)
            got = cvtmesh.weighted_centroid(tri, dens)
            assert np.abs(got - quadrature_centroid(tri, dens)).max() < 1e-8
        # area energy vs per-triangle quadrature oracle (1e-6, 100 cases)
        for _ in range(100):
            p = rng.normal(size=(3, 3))
            if np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])) < 0.05:
                continue
            u = rng.normal(scale=0.5, size=3)
            phi = rng.normal(size=(3, 4))
            tri = mc.TriMesh(p, np.array([[0, 1, 2]]), check=False)
            assembled = areacal.assemble_area_energy(tri, u, where="vertex")
            quad_form = phi.ravel() @ (assembled @ phi.ravel())
            coarse = oracle_energy(p, u, phi, n_grid=150)
            fine = oracle_energy(p, u, phi, n_grid=300)
            oracle = (4.0 * fine - coarse) / 3.0
            assert abs(quad_form - oracle) <= 1e-6 * max(1.0, abs(oracle))
        # E_u(u = 0) equals an independent Dirichlet assembly (1e-9)
        from scipy import sparse as sp

        mesh = icospheres[2]
        e0 = areacal.assemble_area_energy(mesh, np.zeros(mesh.n_faces))
        dirichlet = sp.kron(mc.cotan_laplacian(mesh), sp.identity(4))
        diff = e0 - dirichlet
        assert (abs(diff).max() if diff.nnz else 0.0) < 1e-9
        # closing residual and the Dirac residual vanish together
        closing, dirac = [], []
        for n in (8, 16, 32):
            strip = structured_strip(n)
            u, phi = closing_solution(strip, 0.7, -0.4)
            closing.append(areacal.closing_residual(strip, phi, u, where="vertex"))
            phi_face = phi[strip.faces].mean(axis=1)
            d = sr.assemble_dirac(strip)
            v = (d @ phi_face.ravel()).reshape(-1, 4)
            interior = (~strip.boundary_edge_mask[strip.face_edges]).all(axis=1)
            dirac.append(np.linalg.norm(v[interior]))
        c_slope = [np.log2(a / b) for a, b in zip(closing, closing[1:])]
        d_slope = [np.log2(a / b) for a, b in zip(dirac, dirac[1:])]
        for cs, ds in zip(c_slope, d_slope):
            assert abs(cs - 1.0) < 0.2
            assert ds >= cs - 0.2


def test_criterion_10_mobius_alignment(icospheres):
    with criterion(10, "landmark alignment hits canonical targets at 1e-9", 10.0):
        sphere_param = confmap.sphere_parameterize(icospheres[2])
        rng = np.random.default_rng(303)
        for _ in range(100):
            lmk = rng.choice(sphere_param.mesh.n_vertices, size=3, replace=False)
            al = confmap.sphere_align_landmarks(sphere_param, *lmk)
            p1, p2, p3 = al.points[lmk]
            assert np.linalg.norm(p1 - [0, 0, -1]) < 1e-9
            assert np.linalg.norm(p2 - [1, 0, 0]) < 1e-9
            assert np.linalg.norm(p3 - [0, 0, 1]) < 1e-9
        again = confmap.sphere_align_landmarks(sphere_param, 4, 40, 100)
        again2 = confmap.sphere_align_landmarks(sphere_param, 4, 40, 100)
        assert np.abs(again.points - again2.points).max() == 0.0

        hemi = shapes.hemisphere(10)
        disk_param = confmap.disk_parameterize(hemi)
        interior = np.where(np.linalg.norm(disk_param.points, axis=1) < 0.95)[0]
        for _ in range(100):
            u, v = rng.choice(interior, size=2, replace=False)
            al = confmap.disk_align(disk_param, u, v)
            zu = al.points[u, 0] + 1j * al.points[u, 1]
            zv = al.points[v, 0] + 1j * al.points[v, 1]
            assert abs(zu) < 1e-9
            assert abs(zv.imag) < 1e-9 and zv.real >= 0.0


def test_criterion_11_determinism(tmp_path):
    with criterion(11, "cmd_reconstruct is byte-identical for a fixed seed", 300.0):
        mesh = shapes.bumpy_sphere(2, 0.08)
        mc.save_obj(mesh, tmp_path / "in.obj")
        rc = cli.main([
            "encode", "--in", str(tmp_path / "in.obj"), "--domain", "sphere",
            "--out", str(tmp_path / "t.cbr"),
        ])
        assert rc == 0
        for tag in ("a", "b"):
            rc = cli.main([
                "reconstruct", "--in", str(tmp_path / "t.cbr"), "--steps", "4",
                "--seed", "9", "--out", str(tmp_path / f"{tag}.obj"),
                "--report", str(tmp_path / f"{tag}.txt"), "--no-plot",
            ])
            assert rc == 0
        assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()
        assert (tmp_path / "a.txt").read_text() == (tmp_path / "b.txt").read_text()
