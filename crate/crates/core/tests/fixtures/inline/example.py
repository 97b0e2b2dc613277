x = a + b
if x > 10:
    y = 1
