#pragma once

#include "weblm/checkpoint.hpp"
#include "weblm/config.hpp"
#include "weblm/dom.hpp"
#include "weblm/errors.hpp"
#include "weblm/geometry.hpp"
#include "weblm/gradcheck.hpp"
#include "weblm/image.hpp"
#include "weblm/model.hpp"
#include "weblm/objectives.hpp"
#include "weblm/optimizer.hpp"
#include "weblm/pagegen.hpp"
#include "weblm/prep.hpp"
#include "weblm/records.hpp"
#include "weblm/rng.hpp"
#include "weblm/sequence.hpp"
#include "weblm/stats.hpp"
#include "weblm/tags.hpp"
#include "weblm/tensor.hpp"
#include "weblm/tokenizer.hpp"
#include "weblm/train.hpp"
#include "weblm/visual.hpp"
