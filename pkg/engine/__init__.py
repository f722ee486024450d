from engine.tensor_class import (Tensor, Parameter, Tape, as_tensor, backward, clear_tape, current_tape,
                                 default_dtype, is_recording, no_grad, precision)
from engine.fft import fft2, ifft2
from engine.gradcheck import finite_diff_check
