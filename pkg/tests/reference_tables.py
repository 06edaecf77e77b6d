"""Published day-280 PRCC table (17 parameters x 12 outputs) and extremal parameters."""

OUTPUTS = ("R", "C", "R_g", "R_s", "P", "Z", "C_p", "P_g", "S_p", "S", "D", "V")

PRCC = {
    "alpha1": (0.7131, 0.1215, 0.1393, 0.0552, -0.0930, 0.0215, -0.0073, 0.0688, 0.1273, 0.0543, -0.1016, 0.0530),
    "alpha2": (-0.7010, -0.0135, -0.0220, -0.0439, -0.0321, 0.0057, -0.0016, -0.0100, -0.0194, 0.0085, -0.0037, -0.0250),
    "k1": (0.4193, 0.6718, 0.5960, 0.7087, 0.0168, 0.0419, 0.1800, 0.4778, 0.7952, 0.4969, -0.7067, 0.4417),
    "lam": (-0.4600, -0.6975, -0.6049, -0.7059, -0.0080, -0.0956, -0.1084, -0.4710, -0.7973, -0.4978, -0.7109, -0.4437),
    "delta_c": (-0.5592, -0.7606, -0.6615, -0.7659, -0.0523, -0.1154, -0.1750, -0.5462, -0.8457, -0.5551, 0.7069, -0.5506),
    "lambda_rg": (0.8587, 0.7518, 0.9252, 0.7740, 0.0186, 0.2506, 0.4345, 0.8683, 0.8427, 0.8730, 0.7120, 0.8627),
    "mu1": (-0.0803, -0.0735, -0.1054, -0.0830, -0.9667, -0.0009, -0.0276, -0.0789, -0.0576, -0.0875, -0.0825, -0.0828),
    "lambda_rs": (-0.5741, -0.7814, -0.7013, 0.0319, -0.0554, -0.1657, -0.1599, -0.5837, 0.0222, -0.5993, -0.8171, -0.5737),
    "lambda_sp": (-0.0406, -0.0268, -0.0220, -0.8961, 0.0482, -0.0368, 0.0313, -0.0159, -0.0368, -0.0272, -0.0351, -0.0239),
    "lambda_p": (-0.4714, -0.3586, -0.8754, -0.3802, 0.9655, 0.9113, -0.9139, -0.4832, -0.4482, -0.4723, -0.3069, -0.4570),
    "mu2": (0.0151, -0.0082, -0.0383, 0.0016, 0.0098, -0.3019, -0.1509, 0.0072, -0.0158, 0.0187, 0.0039, 0.0194),
    "lambda_c": (0.5824, 0.4372, 0.3284, 0.4460, -0.0013, -0.9119, 0.9172, 0.5662, 0.5655, 0.5779, 0.3955, 0.5777),
    "beta1": (0.0381, 0.0348, 0.0156, 0.0520, 0.0224, -0.0137, 0.0468, -0.7124, 0.0176, 0.0540, 0.0282, 0.0329),
    "eta_sp": (0.7082, 0.8879, 0.8250, 0.8939, 0.0356, 0.1382, 0.3302, 0.7282, -0.0238, 0.7483, 0.9037, 0.7109),
    "beta2": (0.0390, -0.0242, -0.0244, -0.0271, 0.0136, -0.0340, 0.0413, -0.0105, -0.0153, -0.7475, -0.0024, 0.0038),
    "k2": (-0.4546, -0.6877, -0.6195, -0.7057, 0.0264, -0.0389, -0.2164, -0.5092, -0.7994, -0.5136, -0.7396, -0.4775),
    "delta_v": (-0.7290, -0.1298, -0.0687, -0.1556, -0.0031, -0.0007, -0.0493, -0.0842, -0.1326, -0.1003, 0.0554, -0.7426),
}

# (most positively sensitive, most negatively sensitive) per output.
EXTREMAL = {
    "R": ("lambda_rg", "delta_v"),
    "C": ("eta_sp", "lambda_rs"),
    "R_g": ("lambda_rg", "lambda_p"),
    "R_s": ("eta_sp", "lambda_sp"),
    "P": ("lambda_p", "mu1"),
    "C_p": ("lambda_c", "lambda_p"),
    "Z": ("lambda_p", "lambda_c"),
    "P_g": ("lambda_rg", "beta1"),
    "S_p": ("lambda_rg", "delta_c"),
    "S": ("lambda_rg", "beta2"),
    "D": ("eta_sp", "lambda_rs"),
    "V": ("lambda_rg", "delta_v"),
}


def strong_cells(threshold=0.5):
    """``(parameter, output, value)`` for every cell with |PRCC| >= threshold."""
    return [(p, o, v) for p, row in PRCC.items() for o, v in zip(OUTPUTS, row) if abs(v) >= threshold]
