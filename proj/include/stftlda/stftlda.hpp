#pragma once

#include "bench.hpp"
#include "corpus.hpp"
#include "error.hpp"
#include "fft.hpp"
#include "ingest.hpp"
#include "lda.hpp"
#include "matrix.hpp"
#include "pipeline.hpp"
#include "search.hpp"
#include "similarity.hpp"
#include "special.hpp"
#include "stft.hpp"
#include "synth.hpp"
#include "topics.hpp"
