def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(test_acceptance.RESULTS):
        passed, detail = test_acceptance.RESULTS[num]
        terminalreporter.write_line(test_acceptance.format_line(num, passed, detail))
