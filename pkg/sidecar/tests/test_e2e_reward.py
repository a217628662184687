"""End-to-end: the client toolkit computes a makeup reward with embeddings
served by a live stub sidecar over real HTTP."""

import socket
import subprocess
import sys
import time

import httpx
import numpy as np
import pytest

from makeuplab import stdmesh
from makeuplab.geom import build_warp, warp_image
from makeuplab.imgcore import ImageBuf, Space
from makeuplab.providers import HttpEmbeddingProvider, StubEmbeddingProvider
from makeuplab.rewards import VerifierBundle, cosine_similarity, makeup_reward
from makeuplab.verifier import FaceRegionMask, OpacityParams


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture(scope="module")
def sidecar_url():
    port = _free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "embedsidecar", "--stub", "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    url = f"http://127.0.0.1:{port}"
    try:
        deadline = time.time() + 15
        while time.time() < deadline:
            try:
                if httpx.get(f"{url}/v1/health", timeout=1.0).json().get("ok"):
                    break
            except httpx.HTTPError:
                time.sleep(0.1)
        else:
            raise RuntimeError("sidecar did not come up")
        yield url
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def _synthetic_bundle() -> VerifierBundle:
    """Minimal portrait the verifier accepts: a warped flat-skin face over a
    dark background, with a matching parsing mask and landmarks."""
    size = 160
    lms = stdmesh.standard_landmarks()
    topo = stdmesh.standard_topology()

    texture = np.zeros((size, size, 3))
    texture[:] = (0.82, 0.68, 0.58)
    texture[40:52, 60:100] = (0.75, 0.15, 0.20)  # a makeup-like band
    field = build_warp(lms, lms, topo, cull_backfaces=True, dst_size=(size, size))
    warped = warp_image(ImageBuf(texture, Space.SRGB), field)
    covered = field.coverage >= 0

    img = np.zeros((size, size, 3))
    img[:] = (0.15, 0.16, 0.18)
    img[covered] = warped.data[covered]
    labels = covered.astype(np.float64)[:, :, None]
    return VerifierBundle(
        image=ImageBuf(img, Space.SRGB),
        mask=FaceRegionMask(labels=ImageBuf(labels, Space.ALPHA), face_label_set=frozenset({1})),
        landmarks=lms,
    )


class TestEndToEnd:
    def test_health(self, sidecar_url):
        body = httpx.get(f"{sidecar_url}/v1/health").json()
        assert body == {"ok": True, "stub": True, "version": body["version"]}

    def test_identical_bundles_reward_one(self, sidecar_url):
        bundle = _synthetic_bundle()
        provider = HttpEmbeddingProvider(sidecar_url)
        reward = makeup_reward(bundle, bundle, OpacityParams(), provider)
        assert reward == 1.0

    def test_sidecar_matches_in_process_stub(self, sidecar_url):
        rng = np.random.default_rng(4)
        img = ImageBuf(np.round(rng.uniform(size=(32, 32, 3)) * 255) / 255, Space.SRGB)
        remote = HttpEmbeddingProvider(sidecar_url).embed_image(img, "makeup-embed-v1")
        local = StubEmbeddingProvider().embed_image(img, "makeup-embed-v1")
        assert remote.dim == local.dim
        assert cosine_similarity(remote, local) > 1.0 - 1e-9

    def test_round_trip_dim_matches_declared(self, sidecar_url):
        rng = np.random.default_rng(5)
        img = ImageBuf(rng.uniform(size=(20, 20, 3)), Space.SRGB)
        emb = HttpEmbeddingProvider(sidecar_url).embed_image(img, "face-embed-v1")
        assert emb.dim == 512
        assert emb.vector.shape == (512,)
