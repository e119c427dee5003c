//! Pairwise relation/segmentation classifier with a constraint regularizer.

mod encoder;
mod loss;
mod model;
mod train;

pub use encoder::{
    pair_representation, read_embedding_file, write_embedding_file, BuiltinEncoder, EmbeddingFile, Encoder,
    ExternalEncoder, PairEncoder,
};
pub use loss::{
    loss_cons, loss_cons_grad, soft_featurize, triple_loss, triple_loss_grad, LossWeights, PairPrediction,
    TripleGrad, TripleLoss,
};
pub use model::{hidden_width, pair_matrix, predict_pair, Checkpoint, HeadOutputs, JointModel, Mlp};
pub use train::{train_joint, triple_batch_gradient, JointTrainReport, TrainConfig};
