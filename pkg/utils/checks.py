def is_float(value) -> bool:
    if value is None:
        return False
    # noinspection PyBroadException
    try:
        float(value)
        return True
    except (ValueError, TypeError):
        return False

def check_isdigit(var) -> bool:
    try:
        int(var)
        return True
    except (ValueError, TypeError):
        return False

def is_power_of_two(n) -> bool:
    if not check_isdigit(n) or (isinstance(n, float) and not n.is_integer()):
        return False
    n = int(n)
    return n >= 1 and (n & (n - 1)) == 0

def check_image_size(height: int, width: int, minimum: int = 32) -> bool:
    """
    Synthesis sizes: powers of two, at least `minimum`
    """
    return is_power_of_two(height) and is_power_of_two(width) and min(height, width) >= minimum
