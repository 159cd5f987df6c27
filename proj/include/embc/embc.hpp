#pragma once

#include "embc/embedding.hpp"
#include "embc/evalkit.hpp"
#include "embc/lloyd.hpp"
#include "embc/lsh.hpp"
#include "embc/sparse_codec.hpp"
#include "embc/sparse_encoding.hpp"
#include "embc/threads.hpp"
#include "embc/vocabulary.hpp"
#include "embc/wta.hpp"
