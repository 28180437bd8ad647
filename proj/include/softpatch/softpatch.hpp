#ifndef SOFTPATCH_SOFTPATCH_HPP
#define SOFTPATCH_SOFTPATCH_HPP

#include "coreset.hpp"
#include "discriminators.hpp"
#include "eval.hpp"
#include "feature_io.hpp"
#include "manifest.hpp"
#include "method.hpp"
#include "scoring.hpp"
#include "synthetic.hpp"

#endif
