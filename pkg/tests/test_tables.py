from cpapprox.tables import csv_text, fmt_float


def test_fmt_float_17_significant_digits():
    assert fmt_float(0.1) == "0.10000000000000001"
    assert fmt_float(-0.0) == "0"
    assert fmt_float(1.0) == "1"
    assert float(fmt_float(1 / 3)) == 1 / 3


def test_csv_text_rfc4180():
    text = csv_text(["a", "b"], [[1.5, "x,y"], [True, 'q"t']])
    assert text == 'a,b\r\n1.5,"x,y"\r\ntrue,"q""t"\r\n'
