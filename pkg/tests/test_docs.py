import os
import runpy

DOCS = os.path.join(os.path.dirname(__file__), "..", "docs")


def test_docs_config():
    conf = runpy.run_path(os.path.join(DOCS, "conf.py"))
    assert conf["project"] == "pyScenarioCoverage"
    assert conf["napoleon_numpy_docstring"] and not conf["napoleon_google_docstring"]
    assert "myst_parser" in conf["extensions"]
    for page in ("config_schema.md", "file_formats.md", "stl_grammar.md"):
        assert os.path.splitext(page)[1] in conf["source_suffix"]
        assert os.path.isfile(os.path.join(DOCS, page))
