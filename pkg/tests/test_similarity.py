import json
import math

import httpx
import numpy as np
import pytest

from pcgeval.errors import BackendUnavailable
from pcgeval.level import BlockType, GridConfig, layout_from_blocks
from pcgeval.raster import render
from pcgeval.similarity import (
    LETTERS,
    ExternalClassifier,
    SimilarityResult,
    TemplateClassifier,
    TemplateSet,
    builtin_templates,
    classify,
    dice,
    glyph_layout,
    normalize,
    reference_glyphs,
    similarity_score,
    softmax,
    uniform,
)


def test_softmax_example():
    p = softmax([1.0] + [0.0] * 25, tau=0.1)
    assert p[0] == pytest.approx(math.exp(10) / (math.exp(10) + 25), abs=1e-9)
    assert p[0] == pytest.approx(0.998866, abs=1e-6)
    assert p.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        softmax([0.0], tau=0)


def test_dice_cases():
    a = np.zeros((4, 4), bool)
    a[:2] = True
    b = np.zeros((4, 4), bool)
    b[2:] = True
    c = np.zeros((4, 4), bool)
    c[:, :2] = True
    assert dice(a, a) == 1.0
    assert dice(a, b) == 0.0
    assert dice(a, c) == 0.5
    assert dice(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 0.0


def test_blank_capture_is_uniform():
    result = classify(render(layout_from_blocks(GridConfig(), [])))
    assert result.probs == uniform(result.model_id).probs
    assert similarity_score(result, "A") == pytest.approx(1 / 26)


def test_glyph_font_is_complete():
    glyphs = reference_glyphs()
    assert sorted(glyphs) == list(LETTERS)
    assert all(g.any() for g in glyphs.values())
    assert glyphs["I"].shape == (7, 1)


@pytest.mark.parametrize("letter", ["I", "L", "U", "A", "Z"])
def test_self_recognition(letter):
    result = classify(render(glyph_layout(letter)))
    assert result.argmax == letter
    assert sum(result.probs) == pytest.approx(1.0)


def shifted(letter, dx, dy):
    base = glyph_layout(letter)
    blocks = [(b.block_type, b.x + dx, b.y + dy) for b in base.blocks]
    return layout_from_blocks(GridConfig(), blocks)


@pytest.mark.parametrize("dx, dy", [(-5, 0), (4, 0), (0, 3), (-7, 6)])
def test_translation_invariance(dx, dy):
    a = classify(render(glyph_layout("U")))
    b = classify(render(shifted("U", dx, dy)))
    assert a.probs == pytest.approx(b.probs, abs=1e-12)


def test_shape_made_of_larger_blocks_matches_too():
    # an L built from a column and a row, rather than squares
    layout = layout_from_blocks(
        GridConfig(),
        [(BlockType.B13, 8, 4), (BlockType.B13, 8, 1), (BlockType.B11, 8, 0), (BlockType.B31, 9, 0), (BlockType.B11, 12, 0)],
    )
    assert classify(render(layout)).argmax == "L"


def test_removing_blocks_lowers_similarity():
    full = glyph_layout("U")
    part = layout_from_blocks(GridConfig(), [(b.block_type, b.x, b.y) for b in full.blocks[: len(full.blocks) // 2]])
    assert classify(render(full)).prob("U") > classify(render(part)).prob("U")


def test_normalize_shape():
    mask = np.zeros((50, 80), bool)
    mask[10:20, 5:70] = True
    out = normalize(mask)
    assert out.shape == (64, 64) and out.any()


def test_template_set_validation():
    bms = dict(builtin_templates().bitmaps)
    del bms["Q"]
    with pytest.raises(ValueError):
        TemplateSet(bms)


def test_result_round_trip():
    r = TemplateClassifier()(render(glyph_layout("K")))
    again = SimilarityResult.from_dict(json.loads(json.dumps(r.to_dict())))
    assert again == r


def external(handler):
    return ExternalClassifier("http://model.test/classify", client=httpx.Client(transport=httpx.MockTransport(handler)))


def test_external_backend_contract():
    seen = {}

    def handler(request):
        seen["type"] = request.headers["content-type"]
        seen["magic"] = request.content[:4]
        return httpx.Response(200, json={c: (2.0 if c == "L" else 0.0) for c in LETTERS})

    result = external(handler)(render(glyph_layout("L")))
    assert seen == {"type": "image/png", "magic": b"\x89PNG"}
    assert result.prob("L") == 1.0 and result.model_id.startswith("external:")


def test_external_backend_errors():
    img = render(glyph_layout("L"))
    with pytest.raises(BackendUnavailable):
        external(lambda r: httpx.Response(503))(img)
    with pytest.raises(BackendUnavailable):
        external(lambda r: httpx.Response(200, json={"A": 1.0}))(img)

    def refuse(request):
        raise httpx.ConnectError("refused", request=request)

    with pytest.raises(BackendUnavailable):
        external(refuse)(img)
