import gfmreserve


def test_version_string():
    assert isinstance(gfmreserve.__version__, str)
    assert gfmreserve.__version__
