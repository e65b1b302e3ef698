def ok(a):
    return a + 1
