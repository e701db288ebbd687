"""Semi-regular remeshing: subdivision, chamfer fitting and parametrization transfer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree
from tqdm import tqdm

from config import derive_rng
from errors import FitDivergenceError, ShapeMismatchError, TopologyMismatchError
from geometry import (
    closest_points,
    normalize_unit_cube,
    sample_surface,
    sample_surface_barycentric,
    topology_report,
)
from models import (
    BarycentricParam,
    FitConfig,
    PipelineConfig,
    SemiRegularMesh,
    TopologyReport,
    TriMesh,
)
from simplify import simplify

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0


def subdivide(base: TriMesh, level: int) -> SemiRegularMesh:
    """Midpoint 1->4 subdivision applied ``level`` times, vertices shared globally.

    Fine vertex ids: base vertices first, then ``n - 1`` points per base edge
    (ordered from the lower to the higher vertex id), then the interior points
    of every base face.
    """
    if level < 1:
        raise ShapeMismatchError(f"subdivision level must be >= 1, got {level}")
    n = 2**level
    verts = base.vertices
    n_base = base.n_vertices
    edge_index = {(a, b): k for k, (a, b) in enumerate(base.edges.tolist())}
    per_face = (n - 1) * (n - 2) // 2
    total = n_base + len(edge_index) * (n - 1) + base.n_faces * per_face

    positions = np.zeros((total, 3))
    positions[:n_base] = verts
    grids = np.full((base.n_faces, n + 1, n + 1), -1, dtype=np.int64)

    for f, (a, b, c) in enumerate(base.faces.tolist()):
        next_interior = n_base + len(edge_index) * (n - 1) + f * per_face
        for i in range(n + 1):
            for j in range(n + 1 - i):
                weights = [(a, n - i - j), (b, i), (c, j)]
                nonzero = sorted((v, w) for v, w in weights if w > 0)
                if len(nonzero) == 1:
                    vid = nonzero[0][0]
                elif len(nonzero) == 2:
                    (p, wp), (q, wq) = nonzero
                    vid = n_base + edge_index[(p, q)] * (n - 1) + (wq - 1)
                    positions[vid] = (wp * verts[p] + wq * verts[q]) / n
                else:
                    vid = next_interior
                    next_interior += 1
                    positions[vid] = ((n - i - j) * verts[a] + i * verts[b] + j * verts[c]) / n
                grids[f, i, j] = vid

    return SemiRegularMesh(base, level, positions, grids)


# ---------------------------------------------------------------------------
# Losses


@dataclass
class LossTerm:
    value: float
    grad: np.ndarray
    skipped: int = 0


def chamfer_avg(s1: np.ndarray, s2: np.ndarray) -> float:
    """Mean squared nearest-neighbor distance from s1 to s2 plus from s2 to s1."""
    value, _, _ = chamfer_with_grad(s1, s2)
    return value


def chamfer_with_grad(s1: np.ndarray, s2: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    s1 = np.asarray(s1, dtype=np.float64).reshape(-1, 3)
    s2 = np.asarray(s2, dtype=np.float64).reshape(-1, 3)
    if len(s1) == 0 or len(s2) == 0:
        raise ValueError("chamfer distance needs two nonempty point sets")
    _, nn12 = cKDTree(s2).query(s1, workers=-1)
    _, nn21 = cKDTree(s1).query(s2, workers=-1)
    d12 = s1 - s2[nn12]
    d21 = s2 - s1[nn21]
    value = float(np.sum(d12**2, axis=1).mean() + np.sum(d21**2, axis=1).mean())

    g1 = 2.0 * d12 / len(s1)
    g2 = 2.0 * d21 / len(s2)
    # the matched partners receive the opposite pull
    np.add.at(g2, nn12, -2.0 * d12 / len(s1))
    np.add.at(g1, nn21, -2.0 * d21 / len(s2))
    return value, g1, g2


@dataclass
class FitTopology:
    """Connectivity-derived operators reused by every fitting step."""

    faces: np.ndarray
    edges: np.ndarray
    face_pairs: np.ndarray
    incidence: sparse.csr_matrix
    laplacian: sparse.csr_matrix

    @classmethod
    def from_faces(cls, faces: np.ndarray, n_vertices: int) -> FitTopology:
        faces = np.asarray(faces, dtype=np.int64)
        fe = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        owner = np.tile(np.arange(len(faces)), 3)
        fe = np.sort(fe, axis=1)
        order = np.lexsort((fe[:, 1], fe[:, 0]))
        fe, owner = fe[order], owner[order]
        same = np.all(fe[1:] == fe[:-1], axis=1)
        # manifold interior edges: exactly two consecutive equal rows
        starts = np.flatnonzero(same)
        single = np.ones(len(starts), dtype=bool)
        single[1:] &= starts[1:] != starts[:-1] + 1
        single[:-1] &= starts[:-1] + 1 != starts[1:]
        starts = starts[single]
        face_pairs = np.stack([owner[starts], owner[starts + 1]], axis=1) if len(starts) else np.zeros((0, 2), np.int64)

        edges = np.unique(fe, axis=0)
        m = len(edges)
        rows = np.repeat(np.arange(m), 2)
        cols = edges.ravel()
        vals = np.tile([1.0, -1.0], m)
        incidence = sparse.csr_matrix((vals, (rows, cols)), shape=(m, n_vertices))

        adj = sparse.csr_matrix(
            (np.ones(2 * m), (np.concatenate([edges[:, 0], edges[:, 1]]), np.concatenate([edges[:, 1], edges[:, 0]]))),
            shape=(n_vertices, n_vertices),
        )
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        laplacian = (sparse.diags(inv) @ adj - sparse.identity(n_vertices)).tocsr()
        return cls(faces, edges, face_pairs, incidence, laplacian)


def edge_length_loss(positions: np.ndarray, topo: FitTopology) -> LossTerm:
    """Mean squared edge length."""
    d = topo.incidence @ positions
    value = float(np.sum(d**2, axis=1).mean())
    grad = topo.incidence.T @ (2.0 * d / len(d))
    return LossTerm(value, np.asarray(grad))


def laplacian_loss(
    positions: np.ndarray, topo: FitTopology, vertex_mask: np.ndarray | None = None
) -> LossTerm:
    """Mean squared norm of the uniform Laplacian, optionally over a vertex subset."""
    lx = topo.laplacian @ positions
    if vertex_mask is not None:
        lx = lx * np.asarray(vertex_mask, dtype=np.float64)[:, None]
        count = int(np.count_nonzero(vertex_mask))
    else:
        count = len(lx)
    value = float(np.sum(lx**2) / count)
    grad = topo.laplacian.T @ (2.0 * lx / count)
    return LossTerm(value, np.asarray(grad))


def normal_consistency_loss(positions: np.ndarray, topo: FitTopology) -> LossTerm:
    """Mean ``1 - cos`` between normals of faces sharing an edge.

    Pairs touching a zero-area face are left out and counted in ``skipped``.
    """
    tri = positions[topo.faces]
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    a = np.cross(e1, e2)
    na = np.linalg.norm(a, axis=1)

    f, g = topo.face_pairs[:, 0], topo.face_pairs[:, 1]
    ok = (na[f] > 1e-15) & (na[g] > 1e-15)
    skipped = int(np.count_nonzero(~ok))
    f, g = f[ok], g[ok]
    grad = np.zeros_like(positions)
    if len(f) == 0:
        return LossTerm(0.0, grad, skipped)

    af, ag, nf, ng = a[f], a[g], na[f], na[g]
    cos = np.einsum("ij,ij->i", af, ag) / (nf * ng)
    value = float(np.mean(1.0 - cos))

    scale = -1.0 / len(f)
    da_f = scale * (ag / (nf * ng)[:, None] - cos[:, None] * af / (nf**2)[:, None])
    da_g = scale * (af / (nf * ng)[:, None] - cos[:, None] * ag / (ng**2)[:, None])
    ga = np.zeros_like(a)
    np.add.at(ga, f, da_f)
    np.add.at(ga, g, da_g)

    # a = e1 x e2
    de1 = np.cross(e2, ga)
    de2 = np.cross(ga, e1)
    np.add.at(grad, topo.faces[:, 1], de1)
    np.add.at(grad, topo.faces[:, 2], de2)
    np.add.at(grad, topo.faces[:, 0], -(de1 + de2))
    return LossTerm(value, grad, skipped)


# ---------------------------------------------------------------------------
# Fitting


@dataclass
class FitResult:
    mesh: SemiRegularMesh
    initial_loss: float
    best_loss: float
    final_chamfer: float
    loss_history: list[float] = field(default_factory=list)
    skipped_normal_pairs: int = 0


def _sampling_matrix(faces: np.ndarray, face_ids: np.ndarray, bary: np.ndarray, n_vertices: int):
    n = len(face_ids)
    return sparse.csr_matrix(
        (bary.ravel(), (np.repeat(np.arange(n), 3), faces[face_ids].ravel())),
        shape=(n, n_vertices),
    )


def fit_semiregular(
    sr: SemiRegularMesh, target: TriMesh, cfg: FitConfig, progress: bool = False
) -> FitResult:
    """Gradient descent on per-vertex offsets so the semi-regular surface matches ``target``.

    The objective is the weighted sum of the average chamfer distance between
    surface samples and the edge, normal and Laplacian regularizers. The
    returned mesh is the lowest-loss state seen, so it never scores worse than
    the start.
    """
    rng = derive_rng(cfg.seed, "sampling")
    faces = sr.fine_faces
    n_vertices = sr.n_vertices
    topo = FitTopology.from_faces(faces, n_vertices)
    x0 = sr.fine_positions.copy()
    fixed: dict = {}

    def objective(x: np.ndarray) -> tuple[float, np.ndarray, int]:
        loss = 0.0
        grad = np.zeros_like(x)
        skipped = 0
        if cfg.w_chamfer > 0:
            if cfg.resample or not fixed:
                fixed["target"] = sample_surface(target, cfg.samples, rng)
                fixed["faces"], fixed["bary"] = sample_surface_barycentric(
                    TriMesh(x, faces), cfg.samples, rng
                )
            s = _sampling_matrix(faces, fixed["faces"], fixed["bary"], n_vertices)
            value, _, g_pts = chamfer_with_grad(fixed["target"], s @ x)
            loss += cfg.w_chamfer * value
            grad += cfg.w_chamfer * (s.T @ g_pts)
        for weight, fn in (
            (cfg.w_edge, edge_length_loss),
            (cfg.w_normal, normal_consistency_loss),
            (cfg.w_laplacian, laplacian_loss),
        ):
            if weight > 0:
                term = fn(x, topo)
                loss += weight * term.value
                grad += weight * term.grad
                skipped += term.skipped
        return loss, grad, skipped

    initial, grad, skipped = objective(x0)
    offsets = np.zeros_like(x0)
    velocity = np.zeros_like(x0)
    best_loss, best_offsets = initial, offsets.copy()
    history = [initial]

    for step in tqdm(range(cfg.steps), desc="  Fitting", unit="step", disable=not progress):
        velocity = cfg.momentum * velocity + grad
        offsets = offsets - cfg.lr * velocity
        loss, grad, skipped = objective(x0 + offsets)
        if not np.isfinite(loss) or (initial > 0 and loss > DIVERGENCE_FACTOR * initial):
            raise FitDivergenceError(
                f"fit diverged at step {step + 1}: loss {loss:.6g} vs initial {initial:.6g}"
            )
        history.append(loss)
        if loss < best_loss:
            best_loss, best_offsets = loss, offsets.copy()
        if progress and (step + 1) % 500 == 0:
            tqdm.write(f"  step {step + 1}: loss {loss:.6g}")

    fitted = sr.with_positions(x0 + best_offsets)
    eval_rng = derive_rng(cfg.seed, "fit")
    final_chamfer = chamfer_avg(
        sample_surface(target, cfg.eval_samples, eval_rng),
        sample_surface(fitted.fine_mesh(), cfg.eval_samples, eval_rng),
    )
    logger.info(
        "fit: %d steps, loss %.6g -> %.6g, chamfer %.6g",
        cfg.steps,
        initial,
        best_loss,
        final_chamfer,
    )
    return FitResult(fitted, initial, best_loss, final_chamfer, history, skipped)


# ---------------------------------------------------------------------------
# Parametrization transfer


def project_parametrize(sr: SemiRegularMesh, template: TriMesh) -> BarycentricParam:
    """Express every fine vertex by barycentric weights on its closest template face."""
    face_ids, bary, _ = closest_points(template, sr.fine_positions)
    return BarycentricParam(
        face_ids=face_ids,
        bary=bary,
        template_faces=template.faces.copy(),
        template_vertex_count=template.n_vertices,
    )


def apply_parametrization(param: BarycentricParam, deformed: TriMesh) -> np.ndarray:
    """Fine positions on a mesh sharing the template's connectivity."""
    if deformed.n_vertices != param.template_vertex_count or not np.array_equal(
        deformed.faces, param.template_faces
    ):
        raise TopologyMismatchError(
            f"mesh with {deformed.n_vertices} vertices / {deformed.n_faces} faces does not "
            f"share the template topology ({param.template_vertex_count} vertices / "
            f"{len(param.template_faces)} faces)"
        )
    corners = deformed.vertices[deformed.faces[param.face_ids]]
    return np.einsum("nk,nkd->nd", param.bary, corners)


def transfer_sequence(
    sr: SemiRegularMesh,
    template: TriMesh,
    frames: list[TriMesh],
    names: list[str] | None = None,
    progress: bool = False,
) -> list[SemiRegularMesh]:
    """Apply one template remeshing to every frame of a topology-constant sequence."""
    param = project_parametrize(sr, template)
    names = names or [str(k) for k in range(len(frames))]
    out = []
    for name, frame in tqdm(
        list(zip(names, frames)), desc="  Transferring", unit="frame", disable=not progress
    ):
        try:
            positions = apply_parametrization(param, frame)
        except TopologyMismatchError as e:
            raise TopologyMismatchError(f"frame {name}: {e}") from None
        out.append(sr.with_positions(positions))
    return out


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class RemeshResult:
    mesh: SemiRegularMesh
    chamfer: float
    reached_target: bool
    input_report: TopologyReport
    base_report: TopologyReport


def remesh_mesh(
    mesh: TriMesh, cfg: PipelineConfig, force: bool = False, progress: bool = False
) -> RemeshResult:
    """Simplify, subdivide and fit; processing happens in unit-cube coordinates."""
    report = topology_report(mesh)
    if report.non_manifold_edges and not force:
        raise TopologyMismatchError(
            f"input has {report.non_manifold_edges} non-manifold edges (use --force to proceed)"
        )

    normalized, transform = normalize_unit_cube(mesh)
    base = simplify(normalized, cfg.target_base_faces, cfg.lambda_edge)
    base_report = topology_report(base)
    logger.info("base mesh: %d faces, %s", base.n_faces, base_report)

    sr = subdivide(base, cfg.level)
    fit = fit_semiregular(sr, normalized, cfg.fit, progress=progress)
    restored = fit.mesh.with_positions(transform.invert(fit.mesh.fine_positions))
    return RemeshResult(
        mesh=restored,
        chamfer=fit.final_chamfer,
        reached_target=base.n_faces <= cfg.target_base_faces,
        input_report=report,
        base_report=base_report,
    )
